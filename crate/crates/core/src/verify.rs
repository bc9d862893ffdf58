//! Bounded weak-bisimulation checks between a strategy and a controller,
//! and brute-force solvers for small games.
//!
//! Both solvers are semi-decisions: `None` means no winner exists among
//! the strategies or controllers with the given memory, judged up to the
//! given number of observable steps. Steps on `tau(..)` choosers are free.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::rc::Rc;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::games::{
    cg_initial, controller_events, explore_weighted, judge_cg, judge_cg_witness, judge_pg, judge_pg_witness, Judged, WitnessKind, pg_fire, pg_initial,
    strategy_events, CgState, ControlGame, Controller, Explored, Fallback, GameError, Memo,
    PetriGame, PgState, Recall, Strategy, Verdict,
};
use crate::nets::DEFAULT_STATE_CAP;
use crate::translate::{CgToPgResult, PgToCgResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("search exceeded {0} candidates")]
    SizeLimit(usize),
    #[error(transparent)]
    Game(#[from] GameError),
}

type Observe = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Observable names of transitions and actions; `None` marks internal
/// steps.
#[derive(Clone)]
pub struct ActionMap {
    pub strategy: Observe,
    pub controller: Observe,
}

impl fmt::Debug for ActionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionMap").finish_non_exhaustive()
    }
}

/// `tau(..)` is internal, `act(a,..)` is `a`, anything else is itself.
pub fn observable_by_name(label: &str) -> Option<String> {
    if label.starts_with("tau(") {
        return None;
    }
    if let Some(rest) = label.strip_prefix("act(") {
        return Some(rest.split(',').next().unwrap_or(rest).to_string());
    }
    Some(label.to_string())
}

impl ActionMap {
    pub fn by_name() -> ActionMap {
        ActionMap {
            strategy: Arc::new(observable_by_name),
            controller: Arc::new(observable_by_name),
        }
    }

    /// Strategy on the original game, controller on its translation.
    pub fn pg_to_cg(res: &PgToCgResult) -> ActionMap {
        let res = Arc::new(res.clone());
        ActionMap {
            strategy: Arc::new(|t| Some(t.to_string())),
            controller: Arc::new(move |a| res.observable(a).map(String::from)),
        }
    }

    /// Strategy on the translated game, controller on the original.
    pub fn cg_to_pg(res: &CgToPgResult) -> ActionMap {
        let res = Arc::new(res.clone());
        ActionMap {
            strategy: Arc::new(move |t| res.observable(t).map(String::from)),
            controller: Arc::new(|a| Some(a.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    /// Which transfer clause failed, 1 to 4.
    pub clause: u8,
    /// Moves leading to the failing pair, then the unmatched move.
    pub trace: Vec<String>,
    pub strategy_state: String,
    pub controller_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum BisimVerdict {
    Pass,
    Fail(Counterexample),
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BisimWitness {
    /// Related pairs as rendered strategy and controller states.
    pub relation: Vec<(String, String)>,
    pub depth: usize,
    pub verdict: BisimVerdict,
}

impl BisimWitness {
    pub fn passed(&self) -> bool {
        self.verdict == BisimVerdict::Pass
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BisimOptions {
    /// Observable steps to explore.
    pub depth: usize,
    /// Internal steps per closure; defaults to the number of processes.
    pub tau_cap: Option<usize>,
    pub state_cap: usize,
}

impl BisimOptions {
    pub fn depth(depth: usize) -> Self {
        BisimOptions {
            depth,
            tau_cap: None,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

type Edges = Rc<Vec<(String, Option<String>, usize)>>;

/// One labelled transition system explored on demand.
struct Side<'a, S> {
    nodes: Vec<S>,
    index: HashMap<S, usize>,
    edges: Vec<Option<Edges>>,
    succ: Box<dyn FnMut(&S) -> Result<Vec<(String, S)>, GameError> + 'a>,
    obs: Observe,
    cap: usize,
    capped: bool,
}

impl<'a, S: Clone + Eq + Hash> Side<'a, S> {
    fn new(
        init: S,
        succ: impl FnMut(&S) -> Result<Vec<(String, S)>, GameError> + 'a,
        obs: Observe,
        cap: usize,
    ) -> Self {
        let mut s = Side {
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            succ: Box::new(succ),
            obs,
            cap,
            capped: false,
        };
        s.intern(init).expect("cap is positive");
        s
    }

    fn intern(&mut self, st: S) -> Result<usize, VerifyError> {
        if let Some(&i) = self.index.get(&st) {
            return Ok(i);
        }
        if self.nodes.len() >= self.cap {
            return Err(VerifyError::SizeLimit(self.cap));
        }
        let i = self.nodes.len();
        self.index.insert(st.clone(), i);
        self.nodes.push(st);
        self.edges.push(None);
        Ok(i)
    }

    fn edges(&mut self, i: usize) -> Result<Edges, VerifyError> {
        if let Some(e) = &self.edges[i] {
            return Ok(e.clone());
        }
        let st = self.nodes[i].clone();
        let mut out = Vec::new();
        for (label, next) in (self.succ)(&st)? {
            let o = (self.obs)(&label);
            let j = self.intern(next)?;
            out.push((label, o, j));
        }
        let e = Rc::new(out);
        self.edges[i] = Some(e.clone());
        Ok(e)
    }

    /// States reachable by at most `cap` internal steps.
    fn closure(&mut self, i: usize, cap: usize) -> Result<Vec<usize>, VerifyError> {
        let mut seen = vec![i];
        let mut set: HashSet<usize> = HashSet::from([i]);
        let mut layer = vec![i];
        for step in 0..=cap {
            let mut next = Vec::new();
            for &x in &layer {
                for (_, o, y) in self.edges(x)?.iter() {
                    if o.is_none() && !set.contains(y) {
                        if step == cap {
                            self.capped = true;
                        } else {
                            set.insert(*y);
                            seen.push(*y);
                            next.push(*y);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            layer = next;
        }
        Ok(seen)
    }

    /// States reachable by internal steps, `a`, internal steps.
    fn weak(&mut self, i: usize, a: &str, cap: usize) -> Result<Vec<usize>, VerifyError> {
        let mut out = BTreeSet::new();
        for x in self.closure(i, cap)? {
            for (_, o, y) in self.edges(x)?.iter() {
                if o.as_deref() == Some(a) {
                    out.extend(self.closure(*y, cap)?);
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

struct Obligation {
    clause: u8,
    label: String,
    options: Vec<usize>,
}

pub fn weak_bisim_check(
    g: &PetriGame,
    s: &Strategy,
    c: &ControlGame,
    ctrl: &Controller,
    map: &ActionMap,
    depth: usize,
) -> Result<BisimWitness, VerifyError> {
    weak_bisim_check_with(g, s, c, ctrl, map, BisimOptions::depth(depth))
}

/// Explores pairs of strategy and controller states reachable through
/// matching moves, then removes pairs violating a transfer clause until
/// the relation is stable. Pairs at the depth bound are kept unchecked.
pub fn weak_bisim_check_with(
    g: &PetriGame,
    s: &Strategy,
    c: &ControlGame,
    ctrl: &Controller,
    map: &ActionMap,
    opts: BisimOptions,
) -> Result<BisimWitness, VerifyError> {
    let tau_cap = opts.tau_cap.unwrap_or(c.automaton().processes().len());
    let mut left = Side::new(
        pg_initial(g, &s.recall),
        |st: &PgState| {
            Ok(strategy_events(g, s, st)?
                .into_iter()
                .map(|(t, idx)| {
                    let n = pg_fire(g, &s.recall, st, &t, &idx);
                    (t, n)
                })
                .collect())
        },
        map.strategy.clone(),
        opts.state_cap,
    );
    let mut right = Side::new(
        cg_initial(c, &ctrl.recall),
        |st: &CgState| controller_events(c, ctrl, st),
        map.controller.clone(),
        opts.state_cap,
    );

    let mut pairs: Vec<(usize, usize)> = vec![(0, 0)];
    let mut pindex: HashMap<(usize, usize), usize> = HashMap::from([((0, 0), 0)]);
    let mut k: Vec<usize> = vec![0];
    let mut parent: Vec<Option<(usize, String)>> = vec![None];
    let mut settled = vec![false];
    let mut obligations: Vec<Option<Vec<Obligation>>> = vec![None];
    let mut queue = VecDeque::from([0usize]);
    while let Some(pid) = queue.pop_front() {
        if settled[pid] {
            continue;
        }
        settled[pid] = true;
        if k[pid] >= opts.depth {
            continue;
        }
        let (l, r) = pairs[pid];
        let mut obs: Vec<(u8, String, Vec<(usize, usize)>, usize)> = Vec::new();
        for (t, o, l2) in left.edges(l)?.iter() {
            match o {
                Some(a) => {
                    let opts2 = right.weak(r, a, tau_cap)?.into_iter().map(|r2| (*l2, r2)).collect();
                    obs.push((1, format!("strategy {t}"), opts2, 1));
                }
                None => {
                    let opts2 = right.closure(r, tau_cap)?.into_iter().map(|r2| (*l2, r2)).collect();
                    obs.push((2, format!("strategy {t}"), opts2, 0));
                }
            }
        }
        for (a, o, r2) in right.edges(r)?.iter() {
            match o {
                Some(x) => {
                    let opts2 = left.weak(l, x, tau_cap)?.into_iter().map(|l2| (l2, *r2)).collect();
                    obs.push((3, format!("controller {a}"), opts2, 1));
                }
                None => {
                    let opts2 = left.closure(l, tau_cap)?.into_iter().map(|l2| (l2, *r2)).collect();
                    obs.push((4, format!("controller {a}"), opts2, 0));
                }
            }
        }
        let mut list = Vec::new();
        for (clause, label, options, w) in obs {
            let mut ids = Vec::new();
            for pr in options {
                let d = k[pid] + w;
                let id = match pindex.get(&pr) {
                    Some(&id) => {
                        if !settled[id] && d < k[id] {
                            k[id] = d;
                            parent[id] = Some((pid, label.clone()));
                            if w == 0 {
                                queue.push_front(id);
                            } else {
                                queue.push_back(id);
                            }
                        }
                        id
                    }
                    None => {
                        if pairs.len() >= opts.state_cap {
                            return Err(VerifyError::SizeLimit(opts.state_cap));
                        }
                        let id = pairs.len();
                        pairs.push(pr);
                        pindex.insert(pr, id);
                        k.push(d);
                        parent.push(Some((pid, label.clone())));
                        settled.push(false);
                        obligations.push(None);
                        if w == 0 {
                            queue.push_front(id);
                        } else {
                            queue.push_back(id);
                        }
                        id
                    }
                };
                ids.push(id);
            }
            list.push(Obligation {
                clause,
                label,
                options: ids,
            });
        }
        obligations[pid] = Some(list);
    }

    let mut alive = vec![true; pairs.len()];
    let mut first: Option<(usize, u8, String)> = None;
    loop {
        let mut dead = Vec::new();
        for pid in 0..pairs.len() {
            if !alive[pid] {
                continue;
            }
            let Some(obs) = &obligations[pid] else { continue };
            if let Some(ob) = obs.iter().find(|ob| !ob.options.iter().any(|&o| alive[o])) {
                if first.is_none() {
                    first = Some((pid, ob.clause, ob.label.clone()));
                }
                dead.push(pid);
            }
        }
        if dead.is_empty() {
            break;
        }
        for pid in dead {
            alive[pid] = false;
        }
    }

    let relation = (0..pairs.len())
        .filter(|&p| alive[p])
        .map(|p| {
            let (l, r) = pairs[p];
            (left.nodes[l].to_string(), right.nodes[r].to_string())
        })
        .collect();
    let verdict = if left.capped || right.capped {
        BisimVerdict::Inconclusive {
            reason: format!("internal steps exceeded the cap of {tau_cap}"),
        }
    } else if alive[0] {
        BisimVerdict::Pass
    } else {
        let (pid, clause, label) = first.expect("a violation removed the root");
        let mut trace = Vec::new();
        let mut x = pid;
        while let Some((p, l)) = &parent[x] {
            trace.push(l.clone());
            x = *p;
        }
        trace.reverse();
        trace.push(label);
        let (l, r) = pairs[pid];
        BisimVerdict::Fail(Counterexample {
            clause,
            trace,
            strategy_state: left.nodes[l].to_string(),
            controller_state: right.nodes[r].to_string(),
        })
    };
    Ok(BisimWitness {
        relation,
        depth: opts.depth,
        verdict,
    })
}

fn observable_weight(label: &str) -> usize {
    usize::from(!label.starts_with("tau("))
}

/// Winning check where chooser steps do not count towards `depth`.
pub fn strategy_winning_observable(
    g: &PetriGame,
    s: &Strategy,
    depth: usize,
) -> Result<Verdict, GameError> {
    let ex = explore_weighted(
        pg_initial(g, &s.recall),
        depth,
        DEFAULT_STATE_CAP,
        |st| {
            Ok(strategy_events(g, s, st)?
                .into_iter()
                .map(|(t, idx)| {
                    let n = pg_fire(g, &s.recall, st, &t, &idx);
                    (t, n)
                })
                .collect())
        },
        observable_weight,
    )?;
    Ok(judge_pg(g, &ex))
}

pub fn controller_winning_observable(
    c: &ControlGame,
    ctrl: &Controller,
    depth: usize,
) -> Result<Verdict, GameError> {
    let ex = explore_weighted(
        cg_initial(c, &ctrl.recall),
        depth,
        DEFAULT_STATE_CAP,
        |st| controller_events(c, ctrl, st),
        observable_weight,
    )?;
    Ok(judge_cg(c, &ex))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Observable steps judged.
    pub depth: usize,
    /// Causal depth of the memory decisions may use.
    pub memory: usize,
    /// Candidate evaluations before giving up.
    pub max_candidates: usize,
}

impl SolveOptions {
    pub fn new(depth: usize, memory: usize) -> Self {
        SolveOptions {
            depth,
            memory,
            max_candidates: 200_000,
        }
    }
}

/// Candidate decisions: singletons, then larger sets by decreasing size,
/// then the empty set.
fn options(avail: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
    let mut all = crate::translate::subsets(avail);
    all.retain(|s| !s.is_empty());
    all.sort_by(|a, b| {
        let ka = if a.len() == 1 { 0 } else { usize::MAX - a.len() };
        let kb = if b.len() == 1 { 0 } else { usize::MAX - b.len() };
        ka.cmp(&kb).then_with(|| a.cmp(b))
    });
    all.push(BTreeSet::new());
    all
}

enum Outcome<K> {
    /// A violation that survives any change outside these keys.
    Conflict(BTreeSet<K>),
    Pending(K, BTreeSet<String>),
    Done,
}

type Nogood<K> = BTreeMap<K, BTreeSet<String>>;

struct Search<'a, K> {
    budget: usize,
    max: usize,
    learned: Vec<Nogood<K>>,
    eval: &'a mut dyn FnMut(&BTreeMap<K, BTreeSet<String>>) -> Result<Outcome<K>, VerifyError>,
}

impl<K: Clone + Ord> Search<'_, K> {
    fn learn(&mut self, keys: &BTreeSet<K>, assign: &BTreeMap<K, BTreeSet<String>>) {
        let ng: Nogood<K> = keys.iter().filter_map(|k| Some((k.clone(), assign.get(k)?.clone()))).collect();
        self.learned.push(ng);
    }

    fn known_conflict(&self, assign: &BTreeMap<K, BTreeSet<String>>) -> Option<BTreeSet<K>> {
        self.learned
            .iter()
            .find(|ng| ng.iter().all(|(k, v)| assign.get(k) == Some(v)))
            .map(|ng| ng.keys().cloned().collect())
    }

    /// Depth-first search over lazily discovered decision keys with
    /// conflict-directed backjumping and nogood learning. `Err(set)` is a
    /// nogood over assigned keys.
    fn run(&mut self, assign: &mut BTreeMap<K, BTreeSet<String>>) -> Result<Result<(), BTreeSet<K>>, VerifyError> {
        if let Some(keys) = self.known_conflict(assign) {
            return Ok(Err(keys));
        }
        self.budget += 1;
        if self.budget > self.max {
            return Err(VerifyError::SizeLimit(self.max));
        }
        let r = (self.eval)(assign)?;
        let (key, avail) = match r {
            Outcome::Conflict(keys) => {
                self.learn(&keys, assign);
                return Ok(Err(keys));
            }
            Outcome::Done => return Ok(Ok(())),
            Outcome::Pending(key, avail) => (key, avail),
        };
        let mut nogood = BTreeSet::new();
        for opt in options(&avail) {
            assign.insert(key.clone(), opt);
            match self.run(assign)? {
                Ok(()) => return Ok(Ok(())),
                Err(mut keys) => {
                    if !keys.remove(&key) {
                        assign.remove(&key);
                        return Ok(Err(keys));
                    }
                    nogood.extend(keys);
                }
            }
        }
        assign.remove(&key);
        self.learn(&nogood, assign);
        Ok(Err(nogood))
    }
}

fn search<K: Clone + Ord>(
    max: usize,
    eval: &mut dyn FnMut(&BTreeMap<K, BTreeSet<String>>) -> Result<Outcome<K>, VerifyError>,
) -> Result<Option<BTreeMap<K, BTreeSet<String>>>, VerifyError> {
    let mut s = Search {
        budget: 0,
        max,
        learned: Vec::new(),
        eval,
    };
    let mut assign = BTreeMap::new();
    Ok(s.run(&mut assign)?.ok().map(|()| assign))
}

/// What a step consumes and produces, and what a bad node is blamed on.
/// Places for Petri games, processes for control games.
struct Resources<'a, S> {
    step: &'a dyn Fn(&str) -> (Vec<String>, Vec<String>),
    fault: &'a dyn Fn(&S) -> Vec<String>,
}

/// Steps of a walk that the fault at its end causally depends on.
fn causal_slice<S>(ex: &Explored<S>, walk: &[usize], labels: &[&str], res: &Resources<S>) -> Vec<usize> {
    let mut need: BTreeMap<String, usize> = BTreeMap::new();
    if let Some(r) = (res.fault)(&ex.nodes[*walk.last().expect("non-empty walk")]).into_iter().next() {
        need.insert(r, 1);
    }
    let mut keep = Vec::new();
    for i in (0..labels.len()).rev() {
        let (pre, post) = (res.step)(labels[i]);
        let hit = post.iter().any(|r| need.get(r).is_some_and(|n| *n > 0));
        if !hit {
            continue;
        }
        keep.push(i);
        for r in &post {
            if let Some(n) = need.get_mut(r) {
                *n = n.saturating_sub(1);
            }
        }
        for r in pre {
            *need.entry(r).or_default() += 1;
        }
    }
    keep
}

/// Classifies an exploration in which `blocked` nodes were left unexpanded.
/// The conflict set holds the assigned keys that let the violating walk
/// happen: the causal slice of a bad walk, every step of a cycle, and for
/// a blocking end every step plus every key of the last node.
#[allow(clippy::too_many_arguments)]
fn classify<S, K: Ord + Clone>(
    mut ex: Explored<S>,
    blocked: &HashSet<usize>,
    pending: Option<(K, BTreeSet<String>)>,
    judge: impl Fn(&Explored<S>) -> Judged,
    step_keys: impl Fn(&S, &str) -> Vec<K>,
    node_keys: impl Fn(&S) -> Vec<K>,
    res: Resources<S>,
    assign: &BTreeMap<K, BTreeSet<String>>,
) -> Outcome<K> {
    for &i in blocked {
        ex.frontier[i] = true;
    }
    let j = judge(&ex);
    if let Verdict::NotWinning(_) = &j.verdict {
        let walk = &j.witness;
        let labels: Vec<&str> = walk
            .windows(2)
            .map(|w| {
                ex.edges[w[0]]
                    .iter()
                    .find(|e| e.1 == w[1])
                    .map(|e| e.0.as_str())
                    .expect("witness walks follow edges")
            })
            .collect();
        let steps: Vec<usize> = match j.kind {
            Some(WitnessKind::Bad) => causal_slice(&ex, walk, &labels, &res),
            _ => (0..labels.len()).collect(),
        };
        let mut keys = BTreeSet::new();
        for i in steps {
            keys.extend(step_keys(&ex.nodes[walk[i]], labels[i]));
        }
        if j.kind == Some(WitnessKind::Blocking) {
            if let Some(&last) = walk.last() {
                keys.extend(node_keys(&ex.nodes[last]));
            }
        }
        keys.retain(|k| assign.contains_key(k));
        return Outcome::Conflict(keys);
    }
    match pending {
        Some((k, avail)) => Outcome::Pending(k, avail),
        None => Outcome::Done,
    }
}

fn table_strategy(memory: usize, assign: &BTreeMap<(String, Memo), BTreeSet<String>>) -> Strategy {
    let mut s = Strategy::table(Recall::Depth(memory), Fallback::Nothing);
    for ((p, m), a) in assign {
        s.insert(p, m.clone(), a.iter().cloned());
    }
    s
}

/// A silent step that may be fired alone: its single token is committed to
/// it and nothing else, so no other event can disable it and it commutes
/// with all of them. It must not change whether the token is special.
fn ample(
    g: &PetriGame,
    assign: &BTreeMap<(String, Memo), BTreeSet<String>>,
    st: &PgState,
    t: &str,
    idx: &[usize],
) -> bool {
    let net = g.net();
    let [i] = idx else {
        return false;
    };
    let tok = &st.0[*i];
    let post = net.post(t);
    observable_weight(t) == 0
        && net.pre(t).total() == 1
        && post.total() == 1
        && post.support().all(|p| g.is_special(p) == g.is_special(&tok.place))
        && assign
            .get(&(tok.place.clone(), tok.memo.clone()))
            .is_some_and(|d| d.len() == 1 && d.contains(t))
}

pub fn solve_pg(g: &PetriGame, depth: usize, memory: usize) -> Result<Option<Strategy>, VerifyError> {
    solve_pg_with(g, SolveOptions::new(depth, memory))
}

pub fn solve_pg_with(g: &PetriGame, opts: SolveOptions) -> Result<Option<Strategy>, VerifyError> {
    let recall = Recall::Depth(opts.memory);
    let mut eval = |assign: &BTreeMap<(String, Memo), BTreeSet<String>>| {
        let s = table_strategy(opts.memory, assign);
        let mut pending: Option<((String, Memo), BTreeSet<String>)> = None;
        let mut blocked_states: HashSet<PgState> = HashSet::new();
        let ex = explore_weighted(
            pg_initial(g, &recall),
            opts.depth,
            DEFAULT_STATE_CAP,
            |st: &PgState| {
                let open = st.0.iter().find(|t| {
                    g.is_system(&t.place) && !assign.contains_key(&(t.place.clone(), t.memo.clone()))
                });
                if let Some(t) = open {
                    if pending.is_none() {
                        pending = Some((
                            (t.place.clone(), t.memo.clone()),
                            g.net().place_post(&t.place).clone(),
                        ));
                    }
                    blocked_states.insert(st.clone());
                    return Ok(Vec::new());
                }
                let mut events = strategy_events(g, &s, st)?;
                if let Some(k) = events.iter().position(|(t, idx)| ample(g, assign, st, t, idx)) {
                    events = vec![events.swap_remove(k)];
                }
                Ok(events
                    .into_iter()
                    .map(|(t, idx)| {
                        let n = pg_fire(g, &recall, st, &t, &idx);
                        (t, n)
                    })
                    .collect())
            },
            observable_weight,
        )?;
        let blocked: HashSet<usize> = (0..ex.nodes.len())
            .filter(|&i| blocked_states.contains(&ex.nodes[i]))
            .collect();
        let key_of = |t: &crate::games::Token| (t.place.clone(), t.memo.clone());
        let step_keys = |st: &PgState, tr: &str| {
            let pre = g.net().pre(tr);
            st.0.iter()
                .filter(|t| g.is_system(&t.place) && pre.get(&t.place) > 0)
                .map(key_of)
                .collect()
        };
        let node_keys = |st: &PgState| st.0.iter().filter(|t| g.is_system(&t.place)).map(key_of).collect();
        let step = |t: &str| (g.net().pre(t).tokens(), g.net().post(t).tokens());
        let fault = |st: &PgState| {
            st.0.iter()
                .filter(|t| g.is_special(&t.place))
                .map(|t| t.place.clone())
                .collect()
        };
        let res = Resources {
            step: &step,
            fault: &fault,
        };
        Ok(classify(ex, &blocked, pending, |e| judge_pg_witness(g, e), step_keys, node_keys, res, assign))
    };
    let Some(assign) = search(opts.max_candidates, &mut eval)? else {
        return Ok(None);
    };
    let s = table_strategy(opts.memory, &assign);
    debug_assert!(!matches!(
        strategy_winning_observable(g, &s, opts.depth),
        Ok(Verdict::NotWinning(_))
    ));
    Ok(Some(s))
}

fn table_controller(
    memory: usize,
    assign: &BTreeMap<(String, String, Memo), BTreeSet<String>>,
) -> Controller {
    let mut ctrl = Controller::table(Recall::Depth(memory), Fallback::Nothing);
    for ((p, s, m), a) in assign {
        ctrl.insert(p, s, m.clone(), a.iter().cloned());
    }
    ctrl
}

pub fn solve_cg(c: &ControlGame, depth: usize, memory: usize) -> Result<Option<Controller>, VerifyError> {
    solve_cg_with(c, SolveOptions::new(depth, memory))
}

pub fn solve_cg_with(c: &ControlGame, opts: SolveOptions) -> Result<Option<Controller>, VerifyError> {
    let recall = Recall::Depth(opts.memory);
    let procs = c.automaton().processes().to_vec();
    let mut eval = |assign: &BTreeMap<(String, String, Memo), BTreeSet<String>>| {
        let ctrl = table_controller(opts.memory, assign);
        let mut pending: Option<((String, String, Memo), BTreeSet<String>)> = None;
        let mut blocked_states: HashSet<CgState> = HashSet::new();
        let ex = explore_weighted(
            cg_initial(c, &recall),
            opts.depth,
            DEFAULT_STATE_CAP,
            |st: &CgState| {
                for (i, p) in procs.iter().enumerate() {
                    let avail = c.controllable_at(p, &st.states[i]);
                    if avail.is_empty() {
                        continue;
                    }
                    let key = (p.clone(), st.states[i].clone(), st.memos[i].clone());
                    if !assign.contains_key(&key) {
                        if pending.is_none() {
                            pending = Some((key, avail));
                        }
                        blocked_states.insert(st.clone());
                        return Ok(Vec::new());
                    }
                }
                controller_events(c, &ctrl, st)
            },
            observable_weight,
        )?;
        let blocked: HashSet<usize> = (0..ex.nodes.len())
            .filter(|&i| blocked_states.contains(&ex.nodes[i]))
            .collect();
        let key_at = |st: &CgState, i: usize| (procs[i].clone(), st.states[i].clone(), st.memos[i].clone());
        let step_keys = |st: &CgState, a: &str| {
            if !c.is_controllable(a) {
                return Vec::new();
            }
            c.automaton().dom_indices(a).iter().map(|&i| key_at(st, i)).collect()
        };
        let node_keys = |st: &CgState| (0..procs.len()).map(|i| key_at(st, i)).collect();
        let step = |a: &str| {
            let d: Vec<String> = c.alphabet().dom(a).map(|d| d.iter().cloned().collect()).unwrap_or_default();
            (d.clone(), d)
        };
        let fault = |st: &CgState| {
            procs
                .iter()
                .zip(&st.states)
                .filter(|(p, s)| c.is_special(p, s))
                .map(|(p, _)| p.clone())
                .collect()
        };
        let res = Resources {
            step: &step,
            fault: &fault,
        };
        Ok(classify(ex, &blocked, pending, |e| judge_cg_witness(c, e), step_keys, node_keys, res, assign))
    };
    let Some(assign) = search(opts.max_candidates, &mut eval)? else {
        return Ok(None);
    };
    Ok(Some(table_controller(opts.memory, &assign)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{compose_local, LocalProcess};
    use crate::games::Objective;
    use crate::nets::NetBuilder;
    use crate::traces::DistributedAlphabet;

    #[test]
    fn option_order() {
        let avail: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let o = options(&avail);
        assert_eq!(o.len(), 8);
        assert_eq!(o[0].len(), 1);
        assert_eq!(o[3].len(), 3);
        assert!(o[7].is_empty());
    }

    #[test]
    fn by_name_mapping() {
        assert_eq!(observable_by_name("tau(A,{a})"), None);
        assert_eq!(observable_by_name("act(d,[B,E],[{},{c}])").as_deref(), Some("d"));
        assert_eq!(observable_by_name("e1").as_deref(), Some("e1"));
    }

    fn choice_game() -> PetriGame {
        let net = NetBuilder::new()
            .places(["S", "G", "B"])
            .transition("good", &["S"], &["G"])
            .transition("bad", &["S"], &["B"])
            .mark("S")
            .build()
            .unwrap();
        PetriGame::new(net, ["S"], ["G"], Objective::Reachability).unwrap()
    }

    fn choice_control() -> ControlGame {
        let mut lp = LocalProcess::new("S");
        lp.edge("S", "good", "G").edge("S", "bad", "B");
        let alpha = Arc::new(DistributedAlphabet::new([("good", ["p"]), ("bad", ["p"])]).unwrap());
        let aut = compose_local(&[("p".to_string(), lp)].into(), alpha).unwrap();
        let special = [("p".to_string(), ["G".to_string()].into())].into();
        ControlGame::new(aut, ["good", "bad"], special, Objective::Reachability).unwrap()
    }

    #[test]
    fn solvers_pick_the_good_branch() {
        let g = choice_game();
        let s = solve_pg(&g, 4, 0).unwrap().unwrap();
        assert!(strategy_winning_observable(&g, &s, 4).unwrap().is_winning());
        let c = choice_control();
        let ctrl = solve_cg(&c, 4, 0).unwrap().unwrap();
        assert!(controller_winning_observable(&c, &ctrl, 4).unwrap().is_winning());
    }

    #[test]
    fn bisim_on_identical_choice() {
        let g = choice_game();
        let c = choice_control();
        let mut s = Strategy::table(Recall::Depth(0), Fallback::Nothing);
        s.insert("S", Memo::Term(crate::games::Term::empty()), ["good"]);
        let mut ctrl = Controller::table(Recall::Depth(0), Fallback::Nothing);
        ctrl.insert("p", "S", Memo::Term(crate::games::Term::empty()), ["good"]);
        let w = weak_bisim_check(&g, &s, &c, &ctrl, &ActionMap::by_name(), 3).unwrap();
        assert!(w.passed());
        let all = Controller::top();
        let w = weak_bisim_check(&g, &s, &c, &all, &ActionMap::by_name(), 3).unwrap();
        match w.verdict {
            BisimVerdict::Fail(cx) => {
                assert_eq!(cx.clause, 3);
                assert_eq!(cx.trace, ["controller bad"]);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn empty_games_pass() {
        let net = NetBuilder::new().places(["A"]).mark("A").build().unwrap();
        let g = PetriGame::new(net, Vec::<String>::new(), ["A"], Objective::Reachability).unwrap();
        let lp = LocalProcess::new("A");
        let alpha = Arc::new(DistributedAlphabet::new(Vec::<(String, Vec<String>)>::new()).unwrap().with_processes(["p"]));
        let aut = compose_local(&[("p".to_string(), lp)].into(), alpha).unwrap();
        let c = ControlGame::new(aut, Vec::<String>::new(), BTreeMap::new(), Objective::Reachability).unwrap();
        let w = weak_bisim_check(&g, &Strategy::allow_all(), &c, &Controller::top(), &ActionMap::by_name(), 2)
            .unwrap();
        assert!(w.passed());
        assert_eq!(w.relation.len(), 1);
    }
}
