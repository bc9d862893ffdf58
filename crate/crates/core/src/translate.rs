//! Translations between Petri games and control games, in both directions,
//! together with the strategy/controller translations and the lower-bound
//! families.
//!
//! Generated names follow a fixed schema: `tau(q,{..})`, `zap(q,{..},t1,t2)`,
//! commitment states and places `(q,{..})`, `act(a,[..],[{..},..])`,
//! `tdl(hash)`, `bot(p)`, `top(p)` and `tch(s,{..})`. Sets are rendered
//! sorted with `{}` for the empty set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::automata::{compose_local, AsyncAutomaton, AutomatonError, LocalProcess};
use crate::distribution::{
    build_snd, compose_snd, find_slice_distribution, validate_slice_distribution, validate_snd,
    DistError, SingularNetDistribution, SliceDistribution,
};
use crate::games::{
    cg_initial, cg_step, materialize, pg_fire, pg_initial, strategy_events, ControlGame,
    Controller, GameError, Memo, Objective, PetriGame, PgState, Recall, RecallFn, Strategy,
};
use crate::nets::{is_final, reachable_markings, Marking, NetBuilder, NetError, Reach, DEFAULT_STATE_CAP};
use crate::traces::{DistributedAlphabet, TraceError};
use crate::unfolding::place_alphabet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("the Petri game must have a reachability objective")]
    NonReachabilityObjective,
    #[error("the control game must have a safety objective")]
    NonSafetyObjective,
    #[error("reachable markings exceeded the state cap of {0}")]
    StateCapExceeded(usize),
    #[error("play reconstruction failed: {0}")]
    ReconstructionAssertionFailed(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// `{a,b}`; `{}` for the empty set.
pub fn render_set<'a, I: IntoIterator<Item = &'a String>>(items: I) -> String {
    let v: Vec<&str> = items.into_iter().map(String::as_str).collect();
    format!("{{{}}}", v.join(","))
}

pub fn commitment_name(q: &str, a: &BTreeSet<String>) -> String {
    format!("({q},{})", render_set(a))
}

pub fn tau_name(q: &str, a: &BTreeSet<String>) -> String {
    format!("tau({q},{})", render_set(a))
}

/// All subsets, ordered by bitmask over the sorted elements.
pub(crate) fn subsets(items: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
    let v: Vec<&String> = items.iter().collect();
    assert!(v.len() < 20, "too many elements for a powerset");
    (0u32..1 << v.len())
        .map(|bits| {
            v.iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, x)| (*x).clone())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgVariant {
    Plain,
    Hatted,
}

impl fmt::Display for PgVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PgVariant::Plain => write!(f, "plain"),
            PgVariant::Hatted => write!(f, "hatted"),
        }
    }
}

impl FromStr for PgVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(PgVariant::Plain),
            "hatted" => Ok(PgVariant::Hatted),
            _ => Err(format!("unknown variant {s:?}, expected plain or hatted")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgVariant {
    Base,
    DeadlockDetection,
    Challenge,
}

impl fmt::Display for CgVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CgVariant::Base => write!(f, "base"),
            CgVariant::DeadlockDetection => write!(f, "deadlock"),
            CgVariant::Challenge => write!(f, "challenge"),
        }
    }
}

impl FromStr for CgVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "base" => Ok(CgVariant::Base),
            "deadlock" | "with_deadlock_detection" => Ok(CgVariant::DeadlockDetection),
            "challenge" | "with_challenge" => Ok(CgVariant::Challenge),
            _ => Err(format!("unknown variant {s:?}, expected base, deadlock or challenge")),
        }
    }
}

/// A distribution accepted by [`pg_to_cg`].
#[derive(Debug, Clone)]
pub enum Distribution {
    Slices(SliceDistribution),
    Snd(SingularNetDistribution),
}

/// Slices when the net has them, otherwise the generated singular net
/// distribution.
pub fn auto_distribution(g: &PetriGame) -> Result<Distribution, TranslateError> {
    if let Some(d) = find_slice_distribution(g.net())? {
        return Ok(Distribution::Slices(d));
    }
    Ok(Distribution::Snd(build_snd(g.net())?))
}

/// What a local state of the translated automaton stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateKind {
    /// A member place; `system` tells whether its label is a system place.
    Place { system: bool },
    /// A commitment `(q, A)` over base transition labels.
    Commitment { place: String, set: BTreeSet<String> },
    Bottom,
}

#[derive(Debug, Clone)]
pub struct PgToCgResult {
    pub control_game: ControlGame,
    pub slice_of_process: BTreeMap<String, usize>,
    pub process_of_slice: Vec<String>,
    pub variant: PgVariant,
    pub snd: SingularNetDistribution,
    /// Labels of member places and transition copies.
    pub pi: BTreeMap<String, String>,
    pub kinds: BTreeMap<(String, String), StateKind>,
    /// `tau` action to `(process, place, set)`.
    pub taus: BTreeMap<String, (String, String, BTreeSet<String>)>,
    /// Base transition to its copies.
    pub copies: BTreeMap<String, Vec<String>>,
}

impl PgToCgResult {
    pub fn kind(&self, p: &str, s: &str) -> Option<&StateKind> {
        self.kinds.get(&(p.to_string(), s.to_string()))
    }

    /// Base transition of an action, `None` for τ and ⚡ actions.
    pub fn observable(&self, a: &str) -> Option<&str> {
        if self.taus.contains_key(a) || a.starts_with("zap(") {
            return None;
        }
        self.pi.get(a).map(String::as_str)
    }
}

pub fn pg_to_cg(
    g: &PetriGame,
    dist: &Distribution,
    variant: PgVariant,
) -> Result<PgToCgResult, TranslateError> {
    if g.objective() != Objective::Reachability {
        return Err(TranslateError::NonReachabilityObjective);
    }
    let snd = match dist {
        Distribution::Slices(d) => {
            let v = validate_slice_distribution(g.net(), d);
            if !v.is_empty() {
                return Err(TranslateError::InvalidDistribution(v.join("; ")));
            }
            d.to_snd(g.net())?
        }
        Distribution::Snd(s) => {
            let r = validate_snd(g.net(), s);
            if !r.is_valid() {
                return Err(TranslateError::InvalidDistribution(r.violations.join("; ")));
            }
            s.clone()
        }
    };
    let (_, pi) = compose_snd(&snd)?;
    let procs: Vec<String> = (1..=snd.members.len()).map(|i| format!("s{i}")).collect();
    let sys = |q: &str| g.is_system(&pi[q]);

    let mut locals: BTreeMap<String, LocalProcess> = BTreeMap::new();
    let mut dom: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut kinds = BTreeMap::new();
    let mut taus = BTreeMap::new();
    let mut special: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut copies: BTreeMap<String, Vec<String>> = BTreeMap::new();

    for (m, p) in snd.members.iter().zip(&procs) {
        let net = &m.net;
        let init = net.initial().tokens().into_iter().next().ok_or_else(|| {
            TranslateError::InvalidDistribution(format!("member {p} has no token"))
        })?;
        let mut lp = LocalProcess::new(init);
        let sp = special.entry(p.clone()).or_default();
        for t in net.transitions() {
            dom.entry(t.clone()).or_default().insert(p.clone());
            let c = copies.entry(pi[t].clone()).or_default();
            if !c.contains(t) {
                c.push(t.clone());
            }
        }
        for q in net.places() {
            lp.state(q);
            let winning = g.is_special(&pi[q]);
            if winning {
                sp.insert(q.clone());
            }
            kinds.insert((p.clone(), q.clone()), StateKind::Place { system: sys(q) });
            let succ = |t: &String| net.post(t).tokens().into_iter().next().unwrap();
            if sys(q) {
                let labels: BTreeSet<String> = net.place_post(q).iter().map(|t| pi[t].clone()).collect();
                for a in subsets(&labels) {
                    let cs = commitment_name(q, &a);
                    let tau = tau_name(q, &a);
                    lp.edge(q, &tau, &cs);
                    dom.insert(tau.clone(), [p.clone()].into());
                    taus.insert(tau, (p.clone(), q.clone(), a.clone()));
                    for t in net.place_post(q) {
                        if a.contains(&pi[t]) {
                            lp.edge(&cs, t, &succ(t));
                        }
                    }
                    if winning {
                        sp.insert(cs.clone());
                    }
                    kinds.insert(
                        (p.clone(), cs),
                        StateKind::Commitment {
                            place: q.clone(),
                            set: a,
                        },
                    );
                }
            } else {
                for t in net.place_post(q) {
                    lp.edge(q, t, &succ(t));
                }
            }
        }
        locals.insert(p.clone(), lp);
    }

    if variant == PgVariant::Hatted {
        for p in &procs {
            locals.get_mut(p).unwrap().state("bot");
            kinds.insert((p.clone(), "bot".to_string()), StateKind::Bottom);
        }
        for (i, m) in snd.members.iter().enumerate() {
            for q in m.net.places().iter().filter(|q| sys(q)) {
                let post: Vec<&String> = m.net.place_post(q).iter().collect();
                let labels: BTreeSet<String> = post.iter().map(|t| pi[*t].clone()).collect();
                for a in subsets(&labels) {
                    for (x, t1) in post.iter().enumerate() {
                        for t2 in &post[x + 1..] {
                            if pi[*t1] == pi[*t2] || !a.contains(&pi[*t1]) || !a.contains(&pi[*t2]) {
                                continue;
                            }
                            let zap = format!("zap({q},{},{t1},{t2})", render_set(&a));
                            add_zap(&snd, &pi, &procs, &sys, &mut locals, &mut dom, i, q, &a, [t1, t2], &zap);
                        }
                    }
                }
            }
        }
    }

    let alpha = Arc::new(DistributedAlphabet::new(dom)?.with_processes(procs.iter().cloned()));
    let aut = compose_local(&locals, alpha)?;
    let controllable: BTreeSet<String> = taus.keys().cloned().collect();
    let control_game = ControlGame::new(aut, controllable, special, Objective::Reachability)?;
    Ok(PgToCgResult {
        control_game,
        slice_of_process: procs.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect(),
        process_of_slice: procs,
        variant,
        snd,
        pi,
        kinds,
        taus,
        copies,
    })
}

#[allow(clippy::too_many_arguments)]
fn add_zap(
    snd: &SingularNetDistribution,
    pi: &BTreeMap<String, String>,
    procs: &[String],
    sys: &dyn Fn(&str) -> bool,
    locals: &mut BTreeMap<String, LocalProcess>,
    dom: &mut BTreeMap<String, BTreeSet<String>>,
    owner: usize,
    q: &str,
    a: &BTreeSet<String>,
    ts: [&String; 2],
    zap: &str,
) {
    let mut d = BTreeSet::new();
    for (j, m) in snd.members.iter().enumerate() {
        let net = &m.net;
        let mine: Vec<&String> = ts.iter().copied().filter(|t| net.has_transition(t)).collect();
        if mine.is_empty() {
            continue;
        }
        d.insert(procs[j].clone());
        let lp = locals.get_mut(&procs[j]).unwrap();
        if j == owner {
            lp.edge(&commitment_name(q, a), zap, "bot");
            continue;
        }
        for q2 in net.places() {
            let post = net.place_post(q2);
            if !mine.iter().all(|t| post.contains(*t)) {
                continue;
            }
            if !sys(q2) {
                lp.edge(q2, zap, "bot");
                continue;
            }
            let labels: BTreeSet<String> = post.iter().map(|t| pi[t].clone()).collect();
            for a2 in subsets(&labels) {
                if mine.iter().all(|t| a2.contains(&pi[*t])) {
                    lp.edge(&commitment_name(q2, &a2), zap, "bot");
                }
            }
        }
    }
    dom.insert(zap.to_string(), d);
}

/// Controller copying a strategy: a process on a system place simulates
/// the transitions of its view in the strategy's unrolling (materialized up
/// to `depth`) and commits to what the reached condition allows. Views the
/// unrolling cannot follow get `∅`.
pub fn strategy_to_controller_pg2cg(
    g: &PetriGame,
    res: &PgToCgResult,
    s: &Strategy,
    depth: usize,
) -> Result<Controller, TranslateError> {
    let mat = Arc::new(materialize(g, s, depth)?);
    let res = Arc::new(res.clone());
    let alpha = res.control_game.alphabet().clone();
    Ok(Controller::custom(Recall::Full(alpha), move |p, state, memo| {
        let Some(StateKind::Place { system: true }) = res.kind(p, state) else {
            return Ok(BTreeSet::new());
        };
        let Some(word) = memo.word() else {
            return Err("expected a full view".to_string());
        };
        let labels: Vec<&str> = word.iter().filter_map(|a| res.observable(a)).collect();
        let Ok(cut) = mat.bp.simulate(&labels) else {
            return Ok(BTreeSet::new());
        };
        let base = &res.pi[state];
        let Some(c) = cut.iter().find(|c| mat.bp.label(c) == Some(base.as_str())) else {
            return Ok(BTreeSet::new());
        };
        let chosen: BTreeSet<String> = mat
            .bp
            .occ_net()
            .place_post(c)
            .iter()
            .filter_map(|e| mat.bp.label(e).map(String::from))
            .collect();
        let tau = tau_name(state, &chosen);
        Ok(if res.taus.contains_key(&tau) {
            [tau].into()
        } else {
            BTreeSet::new()
        })
    }))
}

/// Union of the commitment sets behind the tau actions in `allowed`.
fn merged_commitment(res: &PgToCgResult, allowed: &BTreeSet<String>) -> BTreeSet<String> {
    allowed
        .iter()
        .filter_map(|a| res.taus.get(a))
        .flat_map(|(_, _, set)| set.iter().cloned())
        .collect()
}

/// The controller that, on every system-place state, commits to exactly one
/// set: the union of the sets `ctrl` allows there, or the empty set. Other
/// decisions are passed through. Strategies built by
/// [`controller_to_strategy_pg2cg`] follow this controller.
pub fn star_controller(res: &PgToCgResult, ctrl: &Controller) -> Controller {
    let res = Arc::new(res.clone());
    let inner = ctrl.clone();
    Controller::custom(ctrl.recall.clone(), move |p, state, memo| {
        let c = &res.control_game;
        let dec = inner.decision(c, p, state, memo).map_err(|e| e.to_string())?;
        if res.kind(p, state) != Some(&StateKind::Place { system: true }) {
            return Ok(dec);
        }
        Ok([tau_name(state, &merged_commitment(&res, &dec))].into())
    })
}

/// Replays a linearized causal past in the control game, committing every
/// process on a system place before and after each step. Returns the final
/// state.
fn reconstruct(
    res: &PgToCgResult,
    ctrl: &Controller,
    past: &[String],
) -> Result<crate::games::CgState, String> {
    let c = &res.control_game;
    let extend = |st: crate::games::CgState| -> Result<crate::games::CgState, String> {
        let mut st = st;
        let procs = c.automaton().processes().to_vec();
        for (i, p) in procs.iter().enumerate() {
            let state = st.states[i].clone();
            if res.kind(p, &state) != Some(&StateKind::Place { system: true }) {
                continue;
            }
            let dec = ctrl
                .decision(c, p, &state, &st.memos[i])
                .map_err(|e| e.to_string())?;
            let tau = tau_name(&state, &merged_commitment(res, &dec));
            st = cg_step(c, &ctrl.recall, &st, &tau)
                .ok_or_else(|| format!("{tau} is not available to {p}"))?;
        }
        Ok(st)
    };
    let mut st = extend(cg_initial(c, &ctrl.recall))?;
    for (i, t) in past.iter().enumerate() {
        let next = res
            .copies
            .get(t)
            .into_iter()
            .flatten()
            .find_map(|k| cg_step(c, &ctrl.recall, &st, k));
        match next {
            Some(n) => st = extend(n)?,
            None => {
                return Err(format!(
                    "{t} is not executable after {}",
                    crate::games::show_path(&past[..i])
                ))
            }
        }
    }
    Ok(st)
}

/// Strategy following a controller that commits to at most one set per
/// visit (several sets are merged, none means the empty set). A system place
/// allows the commitment its process holds after replaying the place's
/// causal past. Errors from the replay surface while unrolling to `depth`.
pub fn controller_to_strategy_pg2cg(
    g: &PetriGame,
    res: &PgToCgResult,
    ctrl: &Controller,
    depth: usize,
) -> Result<Strategy, TranslateError> {
    let res = Arc::new(res.clone());
    let ctrl = ctrl.clone();
    let s = Strategy::custom(Recall::Full(place_alphabet(g.net())), move |place, memo| {
        let Some(past) = memo.word() else {
            return Err("expected a full causal past".to_string());
        };
        let st = reconstruct(&res, &ctrl, past)?;
        let procs = res.control_game.automaton().processes();
        for (p, s) in procs.iter().zip(&st.states) {
            if let Some(StateKind::Commitment { place: q, set }) = res.kind(p, s) {
                if res.pi[q] == place {
                    return Ok(set.clone());
                }
            }
        }
        Err(format!("no process holds a commitment for {place} after {}", crate::games::show_path(past)))
    });
    match materialize(g, &s, depth) {
        Ok(_) => Ok(s),
        Err(GameError::Decision(m)) => Err(TranslateError::ReconstructionAssertionFailed(m)),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone)]
pub struct CgToPgResult {
    pub petri_game: PetriGame,
    /// Place to local state; gadget places are absent.
    pub zeta: BTreeMap<String, String>,
    pub process_of_place: BTreeMap<String, String>,
    /// Commitment place to its set.
    pub commitments: BTreeMap<String, BTreeSet<String>>,
    /// Place of each `(process, state)`.
    pub place_of_state: BTreeMap<(String, String), String>,
    /// `act(..)` transition to its action.
    pub actions: BTreeMap<String, String>,
    pub artificial_deadlocks: BTreeSet<Marking>,
    pub variant: CgVariant,
}

impl CgToPgResult {
    /// Action of a transition, `None` for choosers.
    pub fn observable<'a>(&'a self, t: &'a str) -> Option<&'a str> {
        if t.starts_with("tau(") {
            return None;
        }
        Some(self.actions.get(t).map(String::as_str).unwrap_or(t))
    }
}

fn short_hash(s: &str) -> String {
    let d = Sha256::digest(s.as_bytes());
    d.iter().take(4).map(|b| format!("{b:02x}")).collect()
}

pub fn cg_to_pg(c: &ControlGame, variant: CgVariant) -> Result<CgToPgResult, TranslateError> {
    cg_to_pg_with_cap(c, variant, DEFAULT_STATE_CAP)
}

pub fn cg_to_pg_with_cap(
    c: &ControlGame,
    variant: CgVariant,
    cap: usize,
) -> Result<CgToPgResult, TranslateError> {
    if c.objective() != Objective::Safety {
        return Err(TranslateError::NonSafetyObjective);
    }
    let aut = c.automaton();
    let procs = aut.processes().to_vec();
    let mut count: BTreeMap<&String, usize> = BTreeMap::new();
    for ss in aut.all_local_states().values() {
        for s in ss {
            *count.entry(s).or_default() += 1;
        }
    }
    let mut place_of_state = BTreeMap::new();
    let mut zeta = BTreeMap::new();
    let mut process_of_place = BTreeMap::new();
    let mut commitments = BTreeMap::new();
    let mut system = BTreeSet::new();
    let mut special = BTreeSet::new();
    let mut b = NetBuilder::new();
    // commitment places per (process, state)
    let mut options: BTreeMap<(String, String), Vec<(BTreeSet<String>, String)>> = BTreeMap::new();
    for p in &procs {
        for s in aut.local_states(p) {
            let place = if count[s] == 1 { s.clone() } else { format!("{p}:{s}") };
            b.place(place.clone());
            system.insert(place.clone());
            zeta.insert(place.clone(), s.clone());
            process_of_place.insert(place.clone(), p.clone());
            let bad = c.is_special(p, s);
            if bad {
                special.insert(place.clone());
            }
            let mut opts = Vec::new();
            for a in subsets(&c.controllable_at(p, s)) {
                let cp = commitment_name(&place, &a);
                b.place(cp.clone());
                b.transition(tau_name(&place, &a), &[place.clone()], &[cp.clone()]);
                zeta.insert(cp.clone(), s.clone());
                process_of_place.insert(cp.clone(), p.clone());
                commitments.insert(cp.clone(), a.clone());
                if bad {
                    special.insert(cp.clone());
                }
                opts.push((a, cp));
            }
            options.insert((p.clone(), s.clone()), opts);
            place_of_state.insert((p.clone(), s.clone()), place);
        }
        b.mark(place_of_state[&(p.clone(), aut.initial()[p].clone())].clone());
    }
    let mut actions = BTreeMap::new();
    for (a, entries) in aut.delta() {
        let d: Vec<String> = c.alphabet().dom(a).unwrap().iter().cloned().collect();
        let ctrl = c.is_controllable(a);
        for (from, to) in entries {
            let names: Vec<&String> = d
                .iter()
                .zip(from)
                .map(|(p, s)| &place_of_state[&(p.clone(), s.clone())])
                .collect();
            let post: Vec<String> = d
                .iter()
                .zip(to)
                .map(|(p, s)| place_of_state[&(p.clone(), s.clone())].clone())
                .collect();
            let mut combos: Vec<Vec<&(BTreeSet<String>, String)>> = vec![Vec::new()];
            for (p, s) in d.iter().zip(from) {
                let opts = &options[&(p.clone(), s.clone())];
                combos = combos
                    .into_iter()
                    .flat_map(|cmb| {
                        opts.iter()
                            .filter(|o| !ctrl || o.0.contains(a))
                            .map(move |o| {
                                let mut c2 = cmb.clone();
                                c2.push(o);
                                c2
                            })
                    })
                    .collect();
            }
            for cmb in combos {
                let sets: Vec<String> = cmb.iter().map(|o| render_set(&o.0)).collect();
                let t = format!(
                    "act({a},[{}],[{}])",
                    names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
                    sets.join(",")
                );
                let pre: Vec<String> = cmb.iter().map(|o| o.1.clone()).collect();
                b.transition(t.clone(), &pre, &post);
                actions.insert(t, a.clone());
            }
        }
    }
    let base_net = b.build()?;
    let mut artificial_deadlocks = BTreeSet::new();
    if variant != CgVariant::Base {
        let reach = reachable_markings(&base_net, Reach::Fixpoint { cap }).map_err(|e| match e {
            NetError::BoundExceeded(n) => TranslateError::StateCapExceeded(n),
            e => TranslateError::Net(e),
        })?;
        for m in reach {
            if !m.support().all(|q| commitments.contains_key(q)) || !is_final(&base_net, &m) {
                continue;
            }
            let mut global: BTreeMap<String, String> = BTreeMap::new();
            for q in m.support() {
                global.insert(process_of_place[q].clone(), zeta[q].clone());
            }
            if !aut.enabled(&global).is_empty() {
                artificial_deadlocks.insert(m);
            }
        }
        for p in &procs {
            let bot = format!("bot({p})");
            b.place(bot.clone());
            special.insert(bot);
        }
        let bots: Vec<String> = procs.iter().map(|p| format!("bot({p})")).collect();
        for m in &artificial_deadlocks {
            let pre = m.tokens();
            b.transition(format!("tdl({})", short_hash(&pre.join(","))), &pre, &bots);
        }
    }
    if variant == CgVariant::Challenge {
        for p in &procs {
            b.place(format!("top({p})"));
        }
        for (cp, _) in &commitments {
            let p = &process_of_place[cp];
            let s = &zeta[cp];
            let place = &place_of_state[&(p.clone(), s.clone())];
            b.transition(
                format!("tch({place},{})", render_set(&commitments[cp])),
                &[cp.clone()],
                &[format!("top({p})")],
            );
        }
    }
    let net = b.build()?;
    let petri_game = PetriGame::new(net, system, special, Objective::Safety)?;
    Ok(CgToPgResult {
        petri_game,
        zeta,
        process_of_place,
        commitments,
        place_of_state,
        actions,
        artificial_deadlocks,
        variant,
    })
}

/// Memory rule that runs a controller's recall along the translated game:
/// action transitions fire the underlying action over the processes'
/// memos, choosers keep the memo.
struct CgCarry {
    inner: Recall,
    res: Arc<CgToPgResult>,
}

impl RecallFn for CgCarry {
    fn initial(&self, owner: &str) -> Memo {
        let p = self.res.process_of_place.get(owner).map(String::as_str).unwrap_or(owner);
        self.inner.initial(p)
    }

    fn fire(&self, action: &str, pre: &[(&str, &Memo)]) -> Memo {
        if let Some(a) = self.res.actions.get(action) {
            let tagged: Vec<(&str, &Memo)> = pre
                .iter()
                .map(|(q, m)| (self.res.process_of_place[*q].as_str(), *m))
                .collect();
            return self.inner.fire(a, &tagged);
        }
        match pre.first() {
            Some((_, m)) => (*m).clone(),
            None => self.inner.initial(""),
        }
    }
}

/// Strategy in which every system place commits to what the controller
/// allows after the observable past of the place.
pub fn controller_to_strategy_cg2pg(
    c: &ControlGame,
    res: &CgToPgResult,
    ctrl: &Controller,
    depth: usize,
) -> Result<Strategy, TranslateError> {
    let res = Arc::new(res.clone());
    let recall = Recall::Custom(Arc::new(CgCarry {
        inner: ctrl.recall.clone(),
        res: res.clone(),
    }));
    let c2 = c.clone();
    let ctrl = ctrl.clone();
    let r2 = res.clone();
    let s = Strategy::custom(recall, move |place, memo| {
        let (Some(p), Some(s)) = (r2.process_of_place.get(place), r2.zeta.get(place)) else {
            return Err(format!("{place} does not stand for a local state"));
        };
        let e = ctrl.decision(&c2, p, s, memo).map_err(|e| e.to_string())?;
        Ok([tau_name(place, &e)].into())
    });
    match materialize(&res.petri_game, &s, depth) {
        Ok(_) => Ok(s),
        Err(GameError::Decision(m)) => Err(TranslateError::AssumptionViolated(m)),
        Err(e) => Err(e.into()),
    }
}

fn saturate(g: &PetriGame, s: &Strategy, mut st: PgState) -> Result<PgState, GameError> {
    loop {
        let ev = strategy_events(g, s, &st)?;
        let Some((t, idx)) = ev.into_iter().find(|(t, _)| t.starts_with("tau(")) else {
            return Ok(st);
        };
        st = pg_fire(g, &s.recall, &st, &t, &idx);
    }
}

/// Controller reading commitments off a strategy: the view is replayed in
/// the strategy with every possible chooser fired, and the process commits
/// to the set of the place its token ends on.
pub fn strategy_to_controller_cg2pg(
    c: &ControlGame,
    res: &CgToPgResult,
    s: &Strategy,
) -> Controller {
    let res = Arc::new(res.clone());
    let s = s.clone();
    Controller::custom(Recall::Full(c.alphabet().clone()), move |p, _, memo| {
        let Some(word) = memo.word() else {
            return Err("expected a full view".to_string());
        };
        let g = &res.petri_game;
        let mut st = saturate(g, &s, pg_initial(g, &s.recall)).map_err(|e| e.to_string())?;
        for a in word {
            let ev = strategy_events(g, &s, &st).map_err(|e| e.to_string())?;
            let Some((t, idx)) = ev.into_iter().find(|(t, _)| res.actions.get(t) == Some(a)) else {
                return Ok(BTreeSet::new());
            };
            st = pg_fire(g, &s.recall, &st, &t, &idx);
            st = saturate(g, &s, st).map_err(|e| e.to_string())?;
        }
        for tok in &st.0 {
            if res.process_of_place.get(&tok.place).map(String::as_str) == Some(p) {
                return Ok(res.commitments.get(&tok.place).cloned().unwrap_or_default());
            }
        }
        Ok(BTreeSet::new())
    })
}

/// Two tokens: the environment picks `a` or `b`, then meets the system
/// token on one of `t_1..t_n`.
pub fn gen_lower_bound_pg(n: usize) -> PetriGame {
    let mut b = NetBuilder::new();
    b.places(["A", "B", "C", "D"]).mark("A").mark("D");
    b.transition("a", &["A"], &["B"]).transition("b", &["A"], &["B"]);
    for i in 1..=n {
        b.transition(format!("t_{i}"), &["B", "D"], &["C", "D"]);
    }
    let net = b.build().expect("fixed shape");
    PetriGame::new(net, ["D"], ["C", "D"], Objective::Reachability).expect("fixed shape")
}

/// One process moving from `s1` to `s2` on `x` or one of `a_1..a_n`.
pub fn gen_lower_bound_cg(n: usize) -> ControlGame {
    let mut lp = LocalProcess::new("s1");
    lp.edge("s1", "x", "s2");
    let mut dom = vec![("x".to_string(), vec!["p".to_string()])];
    let mut ctrl = BTreeSet::new();
    for i in 1..=n {
        let a = format!("a_{i}");
        lp.edge("s1", &a, "s2");
        dom.push((a.clone(), vec!["p".to_string()]));
        ctrl.insert(a);
    }
    let alpha = Arc::new(DistributedAlphabet::new(dom).expect("fixed shape"));
    let aut: AsyncAutomaton =
        compose_local(&[("p".to_string(), lp)].into(), alpha).expect("fixed shape");
    ControlGame::new(aut, ctrl, BTreeMap::new(), Objective::Safety).expect("fixed shape")
}
