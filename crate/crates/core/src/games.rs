//! Petri games and control games, memory-based strategies and controllers,
//! and bounded winning checks.
//!
//! Strategies are intensional: every token carries a memo computed from its
//! causal past by a [`Recall`] rule, and system places decide from
//! `(place, memo)`. Controllers work the same way on local views. Exploring
//! multisets of `(place, memo)` tokens (or vectors of `(state, memo)`) is
//! exact, so with bounded memos the reachable quotient is finite and lassos
//! are detected exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::AsyncAutomaton;
use crate::nets::{is_final, Marking, NetError, PetriNet, DEFAULT_STATE_CAP};
use crate::traces::{lub_words, normal_form, normalize, DistributedAlphabet, Trace};
use crate::unfolding::{build_prefix, BranchingProcess, PrefixHooks, UnfoldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Reachability,
    Safety,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Reachability => write!(f, "reachability"),
            Objective::Safety => write!(f, "safety"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("unknown place {0:?}")]
    UnknownPlace(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown process {0:?}")]
    UnknownProcess(String),
    #[error("state {state:?} does not belong to process {process:?}")]
    UnknownState { process: String, state: String },
    #[error("game nets need arc multiplicities of at most one")]
    NotSetLike,
    #[error("decision failed: {0}")]
    Decision(String),
    #[error("exploration exceeded {0} states")]
    CapExceeded(usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Unfold(#[from] UnfoldError),
}

/// A Petri game: a net whose places are split between system and
/// environment, with special places read as winning or bad by objective.
#[derive(Debug, Clone)]
pub struct PetriGame {
    net: Arc<PetriNet>,
    system: BTreeSet<String>,
    special: BTreeSet<String>,
    objective: Objective,
}

impl PetriGame {
    pub fn new<I, J, S, T>(
        net: PetriNet,
        system: I,
        special: J,
        objective: Objective,
    ) -> Result<Self, GameError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let system: BTreeSet<String> = system.into_iter().map(Into::into).collect();
        let special: BTreeSet<String> = special.into_iter().map(Into::into).collect();
        for p in system.iter().chain(&special) {
            if !net.has_place(p) {
                return Err(GameError::UnknownPlace(p.clone()));
            }
        }
        let set_like = net
            .transitions()
            .iter()
            .all(|t| net.pre(t).max_count() <= 1 && net.post(t).max_count() <= 1);
        if !set_like {
            return Err(GameError::NotSetLike);
        }
        Ok(Self {
            net: Arc::new(net),
            system,
            special,
            objective,
        })
    }

    pub fn net(&self) -> &Arc<PetriNet> {
        &self.net
    }

    pub fn system(&self) -> &BTreeSet<String> {
        &self.system
    }

    pub fn environment(&self) -> BTreeSet<String> {
        self.net.places().difference(&self.system).cloned().collect()
    }

    pub fn special(&self) -> &BTreeSet<String> {
        &self.special
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn is_system(&self, p: &str) -> bool {
        self.system.contains(p)
    }

    pub fn is_special(&self, p: &str) -> bool {
        self.special.contains(p)
    }
}

/// A control game over an asynchronous automaton.
#[derive(Debug, Clone)]
pub struct ControlGame {
    automaton: Arc<AsyncAutomaton>,
    controllable: BTreeSet<String>,
    special: BTreeMap<String, BTreeSet<String>>,
    objective: Objective,
}

impl ControlGame {
    pub fn new<I, S>(
        automaton: AsyncAutomaton,
        controllable: I,
        special: BTreeMap<String, BTreeSet<String>>,
        objective: Objective,
    ) -> Result<Self, GameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let controllable: BTreeSet<String> = controllable.into_iter().map(Into::into).collect();
        for a in &controllable {
            if !automaton.alphabet().contains(a) {
                return Err(GameError::UnknownAction(a.clone()));
            }
        }
        let mut full = BTreeMap::new();
        for p in automaton.processes() {
            full.insert(p.clone(), BTreeSet::new());
        }
        for (p, ss) in special {
            let states = automaton
                .all_local_states()
                .get(&p)
                .ok_or_else(|| GameError::UnknownProcess(p.clone()))?;
            for s in &ss {
                if !states.contains(s) {
                    return Err(GameError::UnknownState {
                        process: p.clone(),
                        state: s.clone(),
                    });
                }
            }
            full.insert(p, ss);
        }
        Ok(Self {
            automaton: Arc::new(automaton),
            controllable,
            special: full,
            objective,
        })
    }

    pub fn automaton(&self) -> &Arc<AsyncAutomaton> {
        &self.automaton
    }

    pub fn alphabet(&self) -> &Arc<DistributedAlphabet> {
        self.automaton.alphabet()
    }

    pub fn controllable(&self) -> &BTreeSet<String> {
        &self.controllable
    }

    pub fn uncontrollable(&self) -> BTreeSet<String> {
        self.alphabet()
            .actions()
            .filter(|a| !self.controllable.contains(*a))
            .cloned()
            .collect()
    }

    pub fn is_controllable(&self, a: &str) -> bool {
        self.controllable.contains(a)
    }

    pub fn special(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.special
    }

    pub fn is_special(&self, p: &str, s: &str) -> bool {
        self.special.get(p).is_some_and(|ss| ss.contains(s))
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Controllable actions that `p` could take part in from `s`.
    pub fn controllable_at(&self, p: &str, s: &str) -> BTreeSet<String> {
        self.automaton
            .enabled_at(p, s)
            .into_iter()
            .filter(|a| self.controllable.contains(a))
            .collect()
    }
}

/// A tree of recent events: each node is an action with the memos of the
/// places or processes that took part in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub children: Vec<(String, Arc<Term>)>,
}

impl Term {
    pub fn empty() -> Arc<Term> {
        Arc::new(Term {
            label: String::new(),
            children: Vec::new(),
        })
    }

    fn truncate(t: &Arc<Term>, k: usize) -> Arc<Term> {
        if k == 0 {
            return Term::empty();
        }
        if t.children.iter().all(|(_, c)| c.depth() < k) {
            return t.clone();
        }
        Arc::new(Term {
            label: t.label.clone(),
            children: t
                .children
                .iter()
                .map(|(tag, c)| (tag.clone(), Term::truncate(c, k - 1)))
                .collect(),
        })
    }

    pub fn depth(&self) -> usize {
        if self.label.is_empty() {
            0
        } else {
            1 + self.children.iter().map(|(_, c)| c.depth()).max().unwrap_or(0)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.label.is_empty() {
            return write!(f, "ε");
        }
        write!(f, "{}[", self.label)?;
        for (i, (tag, c)) in self.children.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{tag}: {c}")?;
        }
        write!(f, "]")
    }
}

/// What a token or process remembers of its causal past.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Memo {
    /// The whole past as a trace normal form.
    Word(Vec<String>),
    /// The most recent events as a truncated tree.
    Term(Arc<Term>),
}

impl Memo {
    pub fn word(&self) -> Option<&[String]> {
        match self {
            Memo::Word(w) => Some(w),
            Memo::Term(_) => None,
        }
    }
}

impl fmt::Display for Memo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Memo::Word(w) if w.is_empty() => write!(f, "ε"),
            Memo::Word(w) => write!(f, "{}", w.join(" ")),
            Memo::Term(t) => write!(f, "{t}"),
        }
    }
}

/// A user-supplied memory rule.
pub trait RecallFn: Send + Sync {
    fn initial(&self, owner: &str) -> Memo;
    /// Memo after `action` fired with the given participants.
    fn fire(&self, action: &str, pre: &[(&str, &Memo)]) -> Memo;
}

/// How memos evolve along the causal order.
#[derive(Clone)]
pub enum Recall {
    /// Full past, normalized over the given dependence alphabet.
    Full(Arc<DistributedAlphabet>),
    /// Events up to this many causal steps back.
    Depth(usize),
    Custom(Arc<dyn RecallFn>),
}

impl fmt::Debug for Recall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recall::Full(_) => write!(f, "Full"),
            Recall::Depth(k) => write!(f, "Depth({k})"),
            Recall::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Recall {
    pub fn initial(&self, owner: &str) -> Memo {
        match self {
            Recall::Full(_) => Memo::Word(Vec::new()),
            Recall::Depth(_) => Memo::Term(Term::empty()),
            Recall::Custom(r) => r.initial(owner),
        }
    }

    pub fn fire(&self, action: &str, pre: &[(&str, &Memo)]) -> Memo {
        match self {
            Recall::Full(alpha) => {
                let mut acc: Vec<String> = Vec::new();
                for (_, m) in pre {
                    if let Memo::Word(w) = m {
                        acc = lub_words(alpha, &acc, w);
                    }
                }
                acc.push(action.to_string());
                Memo::Word(normal_form(alpha, &acc))
            }
            Recall::Depth(k) => {
                if *k == 0 {
                    return Memo::Term(Term::empty());
                }
                let mut children: Vec<(String, Arc<Term>)> = pre
                    .iter()
                    .map(|(tag, m)| {
                        let t = match m {
                            Memo::Term(t) => Term::truncate(t, k - 1),
                            Memo::Word(_) => Term::empty(),
                        };
                        (tag.to_string(), t)
                    })
                    .collect();
                children.sort();
                Memo::Term(Arc::new(Term {
                    label: action.to_string(),
                    children,
                }))
            }
            Recall::Custom(r) => r.fire(action, pre),
        }
    }
}

/// What an undecided system place or process does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    Nothing,
    Everything,
}

pub type StrategyFn = dyn Fn(&str, &Memo) -> Result<BTreeSet<String>, String> + Send + Sync;
pub type ControllerFn =
    dyn Fn(&str, &str, &Memo) -> Result<BTreeSet<String>, String> + Send + Sync;

#[derive(Clone)]
pub enum StrategyRule {
    Table {
        entries: BTreeMap<(String, Memo), BTreeSet<String>>,
        fallback: Fallback,
    },
    Custom(Arc<StrategyFn>),
}

/// A strategy: system places allow transitions depending on
/// `(place, memo)`; environment places allow everything.
#[derive(Clone)]
pub struct Strategy {
    pub recall: Recall,
    pub rule: StrategyRule,
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            StrategyRule::Table { entries, fallback } => f
                .debug_struct("Strategy")
                .field("recall", &self.recall)
                .field("entries", &entries.len())
                .field("fallback", fallback)
                .finish(),
            StrategyRule::Custom(_) => f
                .debug_struct("Strategy")
                .field("recall", &self.recall)
                .finish_non_exhaustive(),
        }
    }
}

impl Strategy {
    /// Every system place allows its whole postset.
    pub fn allow_all() -> Strategy {
        Strategy::table(Recall::Depth(0), Fallback::Everything)
    }

    pub fn table(recall: Recall, fallback: Fallback) -> Strategy {
        Strategy {
            recall,
            rule: StrategyRule::Table {
                entries: BTreeMap::new(),
                fallback,
            },
        }
    }

    pub fn custom<F>(recall: Recall, f: F) -> Strategy
    where
        F: Fn(&str, &Memo) -> Result<BTreeSet<String>, String> + Send + Sync + 'static,
    {
        Strategy {
            recall,
            rule: StrategyRule::Custom(Arc::new(f)),
        }
    }

    /// Sets a table entry; no-op on custom rules.
    pub fn insert<I, S>(&mut self, place: &str, memo: Memo, allowed: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if let StrategyRule::Table { entries, .. } = &mut self.rule {
            entries.insert(
                (place.to_string(), memo),
                allowed.into_iter().map(Into::into).collect(),
            );
        }
    }

    /// Allowed transitions of a token, or `None` on environment places.
    pub fn decision(
        &self,
        g: &PetriGame,
        place: &str,
        memo: &Memo,
    ) -> Result<Option<BTreeSet<String>>, GameError> {
        if !g.is_system(place) {
            return Ok(None);
        }
        let post = g.net().place_post(place);
        let raw = match &self.rule {
            StrategyRule::Table { entries, fallback } => {
                match entries.get(&(place.to_string(), memo.clone())) {
                    Some(s) => s.clone(),
                    None => match fallback {
                        Fallback::Nothing => BTreeSet::new(),
                        Fallback::Everything => post.clone(),
                    },
                }
            }
            StrategyRule::Custom(f) => f(place, memo).map_err(GameError::Decision)?,
        };
        Ok(Some(raw.intersection(post).cloned().collect()))
    }
}

#[derive(Clone)]
pub enum ControllerRule {
    Table {
        entries: BTreeMap<(String, String, Memo), BTreeSet<String>>,
        fallback: Fallback,
    },
    Custom(Arc<ControllerFn>),
}

/// A controller: each process allows controllable actions depending on
/// `(process, local state, memo of its view)`.
#[derive(Clone)]
pub struct Controller {
    pub recall: Recall,
    pub rule: ControllerRule,
}

impl fmt::Debug for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            ControllerRule::Table { entries, fallback } => f
                .debug_struct("Controller")
                .field("recall", &self.recall)
                .field("entries", &entries.len())
                .field("fallback", fallback)
                .finish(),
            ControllerRule::Custom(_) => f
                .debug_struct("Controller")
                .field("recall", &self.recall)
                .finish_non_exhaustive(),
        }
    }
}

impl Controller {
    /// The controller allowing every action.
    pub fn top() -> Controller {
        Controller::table(Recall::Depth(0), Fallback::Everything)
    }

    pub fn table(recall: Recall, fallback: Fallback) -> Controller {
        Controller {
            recall,
            rule: ControllerRule::Table {
                entries: BTreeMap::new(),
                fallback,
            },
        }
    }

    pub fn custom<F>(recall: Recall, f: F) -> Controller
    where
        F: Fn(&str, &str, &Memo) -> Result<BTreeSet<String>, String> + Send + Sync + 'static,
    {
        Controller {
            recall,
            rule: ControllerRule::Custom(Arc::new(f)),
        }
    }

    pub fn insert<I, S>(&mut self, process: &str, state: &str, memo: Memo, allowed: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if let ControllerRule::Table { entries, .. } = &mut self.rule {
            entries.insert(
                (process.to_string(), state.to_string(), memo),
                allowed.into_iter().map(Into::into).collect(),
            );
        }
    }

    /// Table entry keyed by a view word; the state is read off by running
    /// the word. Needs a `Full` recall.
    pub fn insert_view<I, S, W>(
        &mut self,
        c: &ControlGame,
        process: &str,
        view: &[W],
        allowed: I,
    ) -> Result<(), GameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
        W: AsRef<str>,
    {
        let t = normalize(c.alphabet(), view).map_err(|e| GameError::Decision(e.to_string()))?;
        let states = c
            .automaton()
            .run(t.word())
            .ok_or_else(|| GameError::Decision(format!("view {t} is not a run")))?;
        let i = c
            .automaton()
            .process_index(process)
            .ok_or_else(|| GameError::UnknownProcess(process.to_string()))?;
        self.insert(process, &states[i], Memo::Word(t.word().to_vec()), allowed);
        Ok(())
    }

    /// Allowed controllable actions of process `p` in local state `s`.
    pub fn decision(
        &self,
        c: &ControlGame,
        p: &str,
        s: &str,
        memo: &Memo,
    ) -> Result<BTreeSet<String>, GameError> {
        let avail = c.controllable_at(p, s);
        let raw = match &self.rule {
            ControllerRule::Table { entries, fallback } => {
                match entries.get(&(p.to_string(), s.to_string(), memo.clone())) {
                    Some(x) => x.clone(),
                    None => match fallback {
                        Fallback::Nothing => BTreeSet::new(),
                        Fallback::Everything => avail.clone(),
                    },
                }
            }
            ControllerRule::Custom(f) => f(p, s, memo).map_err(GameError::Decision)?,
        };
        Ok(raw.intersection(&avail).cloned().collect())
    }
}

/// Outcome of a bounded winning check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Winning,
    NotWinning(String),
    Inconclusive,
}

impl Verdict {
    pub fn is_winning(&self) -> bool {
        matches!(self, Verdict::Winning)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Winning => write!(f, "winning"),
            Verdict::NotWinning(r) => write!(f, "not_winning ({r})"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// A token of the exploration quotient.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token {
    pub place: String,
    pub memo: Memo,
}

/// A sorted multiset of tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PgState(pub Vec<Token>);

impl PgState {
    pub fn marking(&self) -> Marking {
        self.0.iter().map(|t| t.place.clone()).collect()
    }
}

impl fmt::Display for PgState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}@{}", t.place, t.memo)?;
        }
        write!(f, "}}")
    }
}

pub fn pg_initial(g: &PetriGame, recall: &Recall) -> PgState {
    let mut v: Vec<Token> = g
        .net()
        .initial()
        .tokens()
        .into_iter()
        .map(|p| Token {
            memo: recall.initial(&p),
            place: p,
        })
        .collect();
    v.sort();
    PgState(v)
}

/// Transitions enabled in the base net with the tokens they would consume.
/// Identical tokens are not distinguished.
pub fn pg_candidates(g: &PetriGame, st: &PgState) -> Vec<(String, Vec<usize>)> {
    let mut by_place: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in st.0.iter().enumerate() {
        let v = by_place.entry(t.place.as_str()).or_default();
        if v.last().is_none_or(|&j| st.0[j] != *t) {
            v.push(i);
        }
    }
    let mut ts: BTreeSet<&String> = BTreeSet::new();
    for p in by_place.keys() {
        ts.extend(g.net().place_post(p).iter());
    }
    let mut out = Vec::new();
    for t in ts {
        let pre = g.net().pre(t);
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for p in pre.support() {
            let Some(idx) = by_place.get(p.as_str()) else {
                combos.clear();
                break;
            };
            let mut next = Vec::with_capacity(combos.len() * idx.len());
            for c in &combos {
                for &i in idx {
                    let mut c2 = c.clone();
                    c2.push(i);
                    next.push(c2);
                }
            }
            combos = next;
        }
        for c in combos {
            out.push((t.clone(), c));
        }
    }
    out
}

pub fn pg_fire(g: &PetriGame, recall: &Recall, st: &PgState, t: &str, idx: &[usize]) -> PgState {
    let pre: Vec<(&str, &Memo)> = idx
        .iter()
        .map(|&i| (st.0[i].place.as_str(), &st.0[i].memo))
        .collect();
    let memo = recall.fire(t, &pre);
    let mut v: Vec<Token> = st
        .0
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(_, t)| t.clone())
        .collect();
    for p in g.net().post(t).tokens() {
        v.push(Token {
            place: p,
            memo: memo.clone(),
        });
    }
    v.sort();
    PgState(v)
}

/// Events allowed by a strategy in a quotient state.
pub fn strategy_events(
    g: &PetriGame,
    s: &Strategy,
    st: &PgState,
) -> Result<Vec<(String, Vec<usize>)>, GameError> {
    let mut dec: Vec<Option<Option<BTreeSet<String>>>> = vec![None; st.0.len()];
    let mut out = Vec::new();
    for (t, idx) in pg_candidates(g, st) {
        let mut ok = true;
        for &i in &idx {
            if dec[i].is_none() {
                dec[i] = Some(s.decision(g, &st.0[i].place, &st.0[i].memo)?);
            }
            if let Some(Some(allowed)) = &dec[i] {
                if !allowed.contains(&t) {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            out.push((t, idx));
        }
    }
    Ok(out)
}

/// Result of a breadth-first exploration.
#[derive(Debug, Clone)]
pub struct Explored<S> {
    pub nodes: Vec<S>,
    pub edges: Vec<Vec<(String, usize)>>,
    pub depth: Vec<usize>,
    pub parent: Vec<Option<(usize, String)>>,
    /// Nodes at the bound with successors that were not added.
    pub frontier: Vec<bool>,
}

impl<S> Explored<S> {
    pub fn truncated(&self) -> bool {
        self.frontier.iter().any(|f| *f)
    }

    /// Labels on the BFS-tree path to a node.
    pub fn path_to(&self, mut i: usize) -> Vec<String> {
        let mut out = Vec::new();
        while let Some((p, l)) = &self.parent[i] {
            out.push(l.clone());
            i = *p;
        }
        out.reverse();
        out
    }

    /// Nodes on the BFS-tree path from the root to `i`, inclusive.
    pub fn path_nodes(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![i];
        while let Some((p, _)) = &self.parent[i] {
            i = *p;
            out.push(i);
        }
        out.reverse();
        out
    }

    /// Some node on a cycle reachable from the root, if any.
    pub fn find_cycle(&self) -> Option<usize> {
        self.find_cycle_nodes().map(|c| c[0])
    }

    /// The nodes of some cycle, starting at its entry.
    pub fn find_cycle_nodes(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut color = vec![0u8; n];
        for root in 0..n {
            if color[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            color[root] = 1;
            while let Some(&mut (v, ref mut k)) = stack.last_mut() {
                if *k < self.edges[v].len() {
                    let w = self.edges[v][*k].1;
                    *k += 1;
                    match color[w] {
                        0 => {
                            color[w] = 1;
                            stack.push((w, 0));
                        }
                        1 => {
                            let at = stack.iter().position(|e| e.0 == w).expect("grey nodes are on the stack");
                            return Some(stack[at..].iter().map(|e| e.0).collect());
                        }
                        _ => {}
                    }
                } else {
                    color[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }
}

/// Breadth-first exploration up to `limit` steps from the root.
pub fn explore<S, F>(init: S, limit: usize, cap: usize, succ: F) -> Result<Explored<S>, GameError>
where
    S: Clone + Eq + Hash,
    F: FnMut(&S) -> Result<Vec<(String, S)>, GameError>,
{
    explore_weighted(init, limit, cap, succ, |_| 1)
}

/// Exploration where each edge costs `weight(label)` (0 or 1) towards
/// `limit`.
pub fn explore_weighted<S, F, W>(
    init: S,
    limit: usize,
    cap: usize,
    mut succ: F,
    weight: W,
) -> Result<Explored<S>, GameError>
where
    S: Clone + Eq + Hash,
    F: FnMut(&S) -> Result<Vec<(String, S)>, GameError>,
    W: Fn(&str) -> usize,
{
    let mut ex = Explored {
        nodes: vec![init.clone()],
        edges: vec![Vec::new()],
        depth: vec![0],
        parent: vec![None],
        frontier: vec![false],
    };
    let mut index: HashMap<S, usize> = HashMap::new();
    index.insert(init, 0);
    let mut settled = vec![false];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        if settled[i] {
            continue;
        }
        settled[i] = true;
        let d = ex.depth[i];
        let node = ex.nodes[i].clone();
        for (label, next) in succ(&node)? {
            let w = weight(&label).min(1);
            let j = match index.get(&next) {
                Some(&j) => {
                    if !settled[j] && d + w < ex.depth[j] {
                        ex.depth[j] = d + w;
                        ex.parent[j] = Some((i, label.clone()));
                        if w == 0 {
                            queue.push_front(j);
                        } else {
                            queue.push_back(j);
                        }
                    }
                    j
                }
                None if d + w > limit => {
                    ex.frontier[i] = true;
                    continue;
                }
                None => {
                    if ex.nodes.len() >= cap {
                        return Err(GameError::CapExceeded(cap));
                    }
                    let j = ex.nodes.len();
                    index.insert(next.clone(), j);
                    ex.nodes.push(next);
                    ex.edges.push(Vec::new());
                    ex.depth.push(d + w);
                    ex.parent.push(Some((i, label.clone())));
                    ex.frontier.push(false);
                    settled.push(false);
                    if w == 0 {
                        queue.push_front(j);
                    } else {
                        queue.push_back(j);
                    }
                    j
                }
            };
            ex.edges[i].push((label, j));
        }
    }
    Ok(ex)
}

/// Shared verdict logic. `bad` flags unsafe nodes, `final_bad` flags final
/// nodes that violate the objective.
/// How a witness walk violates the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessKind {
    /// The last node is bad.
    Bad,
    /// The last node is final and should not be.
    Blocking,
    /// The walk ends by closing a cycle.
    Cycle,
}

/// A verdict plus a violating walk through the explored graph, empty
/// unless the verdict is negative.
#[derive(Debug, Clone)]
pub struct Judged {
    pub verdict: Verdict,
    pub witness: Vec<usize>,
    pub kind: Option<WitnessKind>,
}

fn judge<S>(
    ex: &Explored<S>,
    objective: Objective,
    bad: impl Fn(&S) -> bool,
    final_bad: impl Fn(&S) -> Option<String>,
) -> Judged {
    let lose = |msg: String, witness: Vec<usize>, kind: WitnessKind| Judged {
        verdict: Verdict::NotWinning(msg),
        witness,
        kind: Some(kind),
    };
    for (i, n) in ex.nodes.iter().enumerate() {
        if objective == Objective::Safety && bad(n) {
            return lose(format!("bad state after {}", show_path(&ex.path_to(i))), ex.path_nodes(i), WitnessKind::Bad);
        }
        if ex.edges[i].is_empty() && !ex.frontier[i] {
            if let Some(r) = final_bad(n) {
                return lose(format!("{r} after {}", show_path(&ex.path_to(i))), ex.path_nodes(i), WitnessKind::Blocking);
            }
        }
    }
    if objective == Objective::Reachability {
        if let Some(cycle) = ex.find_cycle_nodes() {
            let mut w = ex.path_nodes(cycle[0]);
            let msg = format!("infinite play through {}", show_path(&ex.path_to(cycle[0])));
            w.extend(cycle.iter().skip(1));
            w.push(cycle[0]);
            return lose(msg, w, WitnessKind::Cycle);
        }
    }
    let verdict = if ex.truncated() {
        Verdict::Inconclusive
    } else {
        Verdict::Winning
    };
    Judged {
        verdict,
        witness: Vec::new(),
        kind: None,
    }
}

pub(crate) fn show_path(p: &[String]) -> String {
    if p.is_empty() {
        "ε".to_string()
    } else {
        p.join(" ")
    }
}

/// Explores the strategy's reachable quotient up to `depth` firings.
pub fn explore_strategy(
    g: &PetriGame,
    s: &Strategy,
    depth: usize,
) -> Result<Explored<PgState>, GameError> {
    explore(pg_initial(g, &s.recall), depth, DEFAULT_STATE_CAP, |st| {
        Ok(strategy_events(g, s, st)?
            .into_iter()
            .map(|(t, idx)| {
                let next = pg_fire(g, &s.recall, st, &t, &idx);
                (t, next)
            })
            .collect())
    })
}

pub fn strategy_winning(g: &PetriGame, s: &Strategy, depth: usize) -> Result<Verdict, GameError> {
    Ok(judge_pg(g, &explore_strategy(g, s, depth)?))
}

/// Verdict of an explored strategy quotient.
pub fn judge_pg(g: &PetriGame, ex: &Explored<PgState>) -> Verdict {
    judge_pg_witness(g, ex).verdict
}

pub fn judge_pg_witness(g: &PetriGame, ex: &Explored<PgState>) -> Judged {
    let net = g.net();
    judge(
        ex,
        g.objective(),
        |st| st.0.iter().any(|t| g.is_special(&t.place)),
        |st| match g.objective() {
            Objective::Safety => {
                (!is_final(net, &st.marking())).then(|| "deadlock".to_string())
            }
            Objective::Reachability => st
                .0
                .iter()
                .any(|t| !g.is_special(&t.place))
                .then(|| "final marking not winning".to_string()),
        },
    )
}

/// True iff no reachable marking has a system token with two enabled events.
pub fn check_deterministic(g: &PetriGame, s: &Strategy, depth: usize) -> Result<bool, GameError> {
    let ex = explore_strategy(g, s, depth)?;
    for st in &ex.nodes {
        let mut count = vec![0usize; st.0.len()];
        for (_, idx) in strategy_events(g, s, st)? {
            for i in idx {
                count[i] += 1;
            }
        }
        // identical tokens share an index but are separate conditions
        for (i, c) in count.iter().enumerate() {
            if g.is_system(&st.0[i].place) && *c > 1 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A strategy unrolled into a branching process.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub bp: BranchingProcess,
    pub memos: BTreeMap<String, Memo>,
    /// Decisions of system conditions.
    pub decisions: BTreeMap<String, BTreeSet<String>>,
}

pub fn materialize(g: &PetriGame, s: &Strategy, depth: usize) -> Result<Materialized, GameError> {
    let recall = s.recall.clone();
    let initial = |p: &str| recall.initial(p);
    let fire = |t: &str, pre: &[(&str, &Memo)]| recall.fire(t, pre);
    let allow = |t: &str, pre: &[(&str, &Memo)]| -> Result<bool, String> {
        for (p, m) in pre {
            if let Some(a) = s.decision(g, p, m).map_err(|e| e.to_string())? {
                if !a.contains(t) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    let hooks = PrefixHooks {
        initial: &initial,
        fire: &fire,
        allow: &allow,
    };
    let (bp, memos) = build_prefix(g.net(), depth, DEFAULT_STATE_CAP, &hooks)?;
    let mut decisions = BTreeMap::new();
    for c in bp.conditions() {
        let place = bp.label(c).unwrap().to_string();
        if let Some(d) = s.decision(g, &place, &memos[c])? {
            decisions.insert(c.clone(), d);
        }
    }
    Ok(Materialized {
        bp,
        memos,
        decisions,
    })
}

/// Co-sets that could fire a transition but have no event, without a
/// system place refusing it uniformly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefusalReport {
    pub violations: Vec<String>,
}

impl RefusalReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_justified_refusal(
    g: &PetriGame,
    bp: &BranchingProcess,
    depth: usize,
) -> Result<RefusalReport, GameError> {
    let occ = bp.occ_net();
    let mut existing: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    for e in occ.transitions() {
        existing.insert((
            bp.label(e).unwrap_or_default().to_string(),
            occ.pre(e).support().cloned().collect(),
        ));
    }
    let consumers = |c: &String| -> BTreeSet<String> {
        occ.place_post(c)
            .iter()
            .filter_map(|e| bp.label(e).map(String::from))
            .collect()
    };
    let mut violations = BTreeSet::new();
    for cut in bp.reachable_cuts(DEFAULT_STATE_CAP)? {
        let mut by_label: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for c in &cut {
            by_label
                .entry(bp.label(c).unwrap_or_default().to_string())
                .or_default()
                .push(c.clone());
        }
        for t in g.net().transitions() {
            for combo in crate::unfolding::choose_preset(g.net().pre(t), &by_label) {
                let h = combo.iter().map(|c| bp.height(c)).max().unwrap_or(0);
                if h >= depth {
                    continue;
                }
                let mut key = combo.clone();
                key.sort();
                if existing.contains(&(t.clone(), key.clone())) {
                    continue;
                }
                let refused = combo.iter().any(|c| {
                    g.is_system(bp.label(c).unwrap_or_default()) && !consumers(c).contains(t)
                });
                if !refused {
                    violations.insert(format!("{t} from {{{}}}", key.join(", ")));
                }
            }
        }
    }
    Ok(RefusalReport {
        violations: violations.into_iter().collect(),
    })
}

/// Global state with one memo per process, both in process order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CgState {
    pub states: Vec<String>,
    pub memos: Vec<Memo>,
}

impl fmt::Display for CgState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, (s, m)) in self.states.iter().zip(&self.memos).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}@{m}")?;
        }
        write!(f, "⟩")
    }
}

pub fn cg_initial(c: &ControlGame, recall: &Recall) -> CgState {
    let aut = c.automaton();
    CgState {
        states: aut.initial_vec(),
        memos: aut.processes().iter().map(|p| recall.initial(p)).collect(),
    }
}

/// Automaton step with memo update; `None` if `δ_a` is undefined.
pub fn cg_step(c: &ControlGame, recall: &Recall, st: &CgState, a: &str) -> Option<CgState> {
    let aut = c.automaton();
    let states = aut.step_vec(&st.states, a)?;
    let idx = aut.dom_indices(a);
    let procs = aut.processes();
    let pre: Vec<(&str, &Memo)> = idx.iter().map(|&i| (procs[i].as_str(), &st.memos[i])).collect();
    let memo = recall.fire(a, &pre);
    let mut memos = st.memos.clone();
    for &i in idx {
        memos[i] = memo.clone();
    }
    Some(CgState { states, memos })
}

/// Actions the controller allows, with their successors.
pub fn controller_events(
    c: &ControlGame,
    ctrl: &Controller,
    st: &CgState,
) -> Result<Vec<(String, CgState)>, GameError> {
    let aut = c.automaton();
    let procs = aut.processes();
    let mut cache: Vec<Option<BTreeSet<String>>> = vec![None; procs.len()];
    let mut out = Vec::new();
    for a in aut.enabled_vec(&st.states) {
        if c.is_controllable(&a) {
            let mut ok = true;
            for &i in aut.dom_indices(&a) {
                if cache[i].is_none() {
                    cache[i] = Some(ctrl.decision(c, &procs[i], &st.states[i], &st.memos[i])?);
                }
                if !cache[i].as_ref().unwrap().contains(&a) {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
        }
        let next = cg_step(c, &ctrl.recall, st, &a).expect("enabled");
        out.push((a, next));
    }
    Ok(out)
}

pub fn controller_compatible_plays(
    c: &ControlGame,
    ctrl: &Controller,
    bound: usize,
) -> Result<BTreeSet<Trace>, GameError> {
    let alpha = c.alphabet().clone();
    let mut seen: BTreeMap<Vec<String>, CgState> = BTreeMap::new();
    let mut queue = VecDeque::new();
    seen.insert(Vec::new(), cg_initial(c, &ctrl.recall));
    queue.push_back(Vec::<String>::new());
    while let Some(w) = queue.pop_front() {
        if w.len() >= bound {
            continue;
        }
        let st = seen[&w].clone();
        for (a, next) in controller_events(c, ctrl, &st)? {
            let mut w2 = w.clone();
            w2.push(a);
            let w2 = normal_form(&alpha, &w2);
            if !seen.contains_key(&w2) {
                if seen.len() >= DEFAULT_STATE_CAP {
                    return Err(GameError::CapExceeded(DEFAULT_STATE_CAP));
                }
                seen.insert(w2.clone(), next);
                queue.push_back(w2);
            }
        }
    }
    Ok(seen
        .into_keys()
        .map(|w| normalize(&alpha, &w).expect("actions come from the alphabet"))
        .collect())
}

pub fn explore_controller(
    c: &ControlGame,
    ctrl: &Controller,
    bound: usize,
) -> Result<Explored<CgState>, GameError> {
    explore(
        cg_initial(c, &ctrl.recall),
        bound,
        DEFAULT_STATE_CAP,
        |st| controller_events(c, ctrl, st),
    )
}

pub fn controller_winning_bounded(
    c: &ControlGame,
    ctrl: &Controller,
    bound: usize,
) -> Result<Verdict, GameError> {
    Ok(judge_cg(c, &explore_controller(c, ctrl, bound)?))
}

/// Verdict of an explored controller quotient.
pub fn judge_cg(c: &ControlGame, ex: &Explored<CgState>) -> Verdict {
    judge_cg_witness(c, ex).verdict
}

pub fn judge_cg_witness(c: &ControlGame, ex: &Explored<CgState>) -> Judged {
    let procs = c.automaton().processes();
    judge(
        ex,
        c.objective(),
        |st| {
            procs
                .iter()
                .zip(&st.states)
                .any(|(p, s)| c.is_special(p, s))
        },
        |st| match c.objective() {
            Objective::Safety => (!c.automaton().enabled_vec(&st.states).is_empty())
                .then(|| "deadlock".to_string()),
            Objective::Reachability => procs
                .iter()
                .zip(&st.states)
                .any(|(p, s)| !c.is_special(p, s))
                .then(|| "final play not winning".to_string()),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{compose_local, LocalProcess};
    use crate::nets::NetBuilder;

    fn one_choice(objective: Objective, special: &[&str]) -> PetriGame {
        let net = NetBuilder::new()
            .places(["S", "G", "B"])
            .transition("good", &["S"], &["G"])
            .transition("bad", &["S"], &["B"])
            .mark("S")
            .build()
            .unwrap();
        PetriGame::new(net, ["S"], special.iter().copied(), objective).unwrap()
    }

    #[test]
    fn table_strategy_picks_branch() {
        let g = one_choice(Objective::Reachability, &["G"]);
        let mut s = Strategy::table(Recall::Depth(1), Fallback::Nothing);
        s.insert("S", Memo::Term(Term::empty()), ["good"]);
        assert_eq!(strategy_winning(&g, &s, 5).unwrap(), Verdict::Winning);
        assert!(!strategy_winning(&g, &Strategy::allow_all(), 5).unwrap().is_winning());
        assert!(check_deterministic(&g, &s, 5).unwrap());
        assert!(!check_deterministic(&g, &Strategy::allow_all(), 5).unwrap());
    }

    #[test]
    fn refusing_everything_deadlocks_in_safety() {
        let g = one_choice(Objective::Safety, &["B"]);
        let s = Strategy::table(Recall::Depth(0), Fallback::Nothing);
        assert!(matches!(strategy_winning(&g, &s, 5).unwrap(), Verdict::NotWinning(r) if r.starts_with("deadlock")));
    }

    #[test]
    fn loop_is_inconclusive_with_full_memory_and_exact_with_depth() {
        let net = NetBuilder::new()
            .places(["S"])
            .transition("spin", &["S"], &["S"])
            .mark("S")
            .build()
            .unwrap();
        let g = PetriGame::new(net, ["S"], Vec::<String>::new(), Objective::Safety).unwrap();
        let full = Strategy::table(
            Recall::Full(crate::unfolding::place_alphabet(g.net())),
            Fallback::Everything,
        );
        assert_eq!(strategy_winning(&g, &full, 6).unwrap(), Verdict::Inconclusive);
        let short = Strategy::table(Recall::Depth(2), Fallback::Everything);
        assert_eq!(strategy_winning(&g, &short, 6).unwrap(), Verdict::Winning);
    }

    #[test]
    fn materialized_allow_all_is_unfolding() {
        let g = one_choice(Objective::Reachability, &["G"]);
        let m = materialize(&g, &Strategy::allow_all(), 3).unwrap();
        assert_eq!(m.bp.events().len(), 2);
        assert!(check_justified_refusal(&g, &m.bp, 3).unwrap().passes());
    }

    fn tiny_cg(objective: Objective) -> ControlGame {
        let alpha = Arc::new(
            DistributedAlphabet::new([("a", ["p"]), ("x", ["p"])]).unwrap(),
        );
        let mut lp = LocalProcess::new("s");
        lp.edge("s", "a", "ok").edge("s", "x", "bad");
        let aut = compose_local(&[("p".to_string(), lp)].into_iter().collect(), alpha).unwrap();
        let special = [("p".to_string(), ["bad".to_string()].into_iter().collect())]
            .into_iter()
            .collect();
        ControlGame::new(aut, ["a"], special, objective).unwrap()
    }

    #[test]
    fn empty_controller_leaves_environment_moves() {
        let c = tiny_cg(Objective::Safety);
        let none = Controller::table(Recall::Depth(0), Fallback::Nothing);
        let plays = controller_compatible_plays(&c, &none, 3).unwrap();
        assert_eq!(plays.len(), 2);
        assert!(!controller_winning_bounded(&c, &none, 3).unwrap().is_winning());
    }

    #[test]
    fn term_truncation() {
        let r = Recall::Depth(2);
        let m0 = r.initial("p");
        let m1 = r.fire("a", &[("p", &m0)]);
        let m2 = r.fire("b", &[("p", &m1)]);
        let m3 = r.fire("c", &[("p", &m2)]);
        let Memo::Term(t) = &m3 else { panic!() };
        assert_eq!(t.depth(), 2);
        assert_eq!(m3.to_string(), "c[p: b[p: ε]]");
    }
}
