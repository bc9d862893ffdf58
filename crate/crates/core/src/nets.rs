//! Place/transition nets with multiset markings, firing and reachability.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Default state cap for fixpoint reachability.
pub const DEFAULT_STATE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown transition {0:?}")]
    UnknownTransition(String),
    #[error("transition {0:?} is not enabled")]
    NotEnabled(String),
    #[error("marking underflow on place {0:?}")]
    Underflow(String),
    #[error("reachability exceeded the state cap of {0}")]
    BoundExceeded(usize),
}

/// A multiset of places. Zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marking(BTreeMap<String, u32>);

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_places<I, S>(places: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut m = Marking::new();
        for p in places {
            m.add_one(p.into());
        }
        m
    }

    pub fn get(&self, place: &str) -> u32 {
        self.0.get(place).copied().unwrap_or(0)
    }

    pub fn add_one(&mut self, place: String) {
        *self.0.entry(place).or_insert(0) += 1;
    }

    pub fn add_n(&mut self, place: String, n: u32) {
        if n > 0 {
            *self.0.entry(place).or_insert(0) += n;
        }
    }

    /// Total number of tokens.
    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self >= other` pointwise.
    pub fn covers(&self, other: &Marking) -> bool {
        other.0.iter().all(|(p, n)| self.get(p) >= *n)
    }

    pub fn plus(&self, other: &Marking) -> Marking {
        let mut out = self.clone();
        for (p, n) in &other.0 {
            out.add_n(p.clone(), *n);
        }
        out
    }

    /// Pointwise subtraction; errors instead of clamping.
    pub fn minus(&self, other: &Marking) -> Result<Marking, NetError> {
        let mut out = self.clone();
        for (p, n) in &other.0 {
            let have = out.get(p);
            if have < *n {
                return Err(NetError::Underflow(p.clone()));
            }
            if have == *n {
                out.0.remove(p);
            } else {
                out.0.insert(p.clone(), have - n);
            }
        }
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &u32)> {
        self.0.iter()
    }

    /// Places with a nonzero count.
    pub fn support(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    /// Places listed with repetition, sorted.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (p, n) in &self.0 {
            for _ in 0..*n {
                out.push(p.clone());
            }
        }
        out
    }

    pub fn max_count(&self) -> u32 {
        self.0.values().copied().max().unwrap_or(0)
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (p, n)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if *n == 1 {
                write!(f, "{p}")?;
            } else {
                write!(f, "{n}*{p}")?;
            }
        }
        write!(f, "}}")
    }
}

impl<S: Into<String>> FromIterator<S> for Marking {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Marking::from_places(iter)
    }
}

/// A finite place/transition net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PetriNet {
    places: BTreeSet<String>,
    transitions: BTreeSet<String>,
    pre: BTreeMap<String, Marking>,
    post: BTreeMap<String, Marking>,
    initial: Marking,
    place_post: BTreeMap<String, BTreeSet<String>>,
    place_pre: BTreeMap<String, BTreeSet<String>>,
}

/// Incremental construction of a [`PetriNet`].
#[derive(Debug, Clone, Default)]
pub struct NetBuilder {
    places: Vec<String>,
    transitions: Vec<(String, Vec<String>, Vec<String>)>,
    initial: Vec<(String, u32)>,
}

impl NetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn place(&mut self, id: impl Into<String>) -> &mut Self {
        self.places.push(id.into());
        self
    }

    pub fn places<I, S>(&mut self, ids: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for id in ids {
            self.places.push(id.into());
        }
        self
    }

    /// Repeated entries in `pre`/`post` become arc multiplicities.
    pub fn transition<S: AsRef<str>>(
        &mut self,
        id: impl Into<String>,
        pre: &[S],
        post: &[S],
    ) -> &mut Self {
        self.transitions.push((
            id.into(),
            pre.iter().map(|s| s.as_ref().to_string()).collect(),
            post.iter().map(|s| s.as_ref().to_string()).collect(),
        ));
        self
    }

    pub fn tokens(&mut self, place: impl Into<String>, n: u32) -> &mut Self {
        self.initial.push((place.into(), n));
        self
    }

    pub fn mark(&mut self, place: impl Into<String>) -> &mut Self {
        self.tokens(place, 1)
    }

    pub fn build(&self) -> Result<PetriNet, NetError> {
        let mut places = BTreeSet::new();
        for p in &self.places {
            if !places.insert(p.clone()) {
                return Err(NetError::DuplicateId(p.clone()));
            }
        }
        let mut transitions = BTreeSet::new();
        let mut pre = BTreeMap::new();
        let mut post = BTreeMap::new();
        for (t, i, o) in &self.transitions {
            if places.contains(t) || !transitions.insert(t.clone()) {
                return Err(NetError::DuplicateId(t.clone()));
            }
            for p in i.iter().chain(o) {
                if !places.contains(p) {
                    return Err(NetError::UnknownNode(p.clone()));
                }
            }
            pre.insert(t.clone(), Marking::from_places(i.iter().cloned()));
            post.insert(t.clone(), Marking::from_places(o.iter().cloned()));
        }
        let mut initial = Marking::new();
        for (p, n) in &self.initial {
            if !places.contains(p) {
                return Err(NetError::UnknownNode(p.clone()));
            }
            initial.add_n(p.clone(), *n);
        }
        Ok(PetriNet::assemble(places, transitions, pre, post, initial))
    }
}

impl PetriNet {
    fn assemble(
        places: BTreeSet<String>,
        transitions: BTreeSet<String>,
        pre: BTreeMap<String, Marking>,
        post: BTreeMap<String, Marking>,
        initial: Marking,
    ) -> PetriNet {
        let mut place_post: BTreeMap<String, BTreeSet<String>> =
            places.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
        let mut place_pre = place_post.clone();
        for t in &transitions {
            for p in pre[t].support() {
                place_post.get_mut(p).unwrap().insert(t.clone());
            }
            for p in post[t].support() {
                place_pre.get_mut(p).unwrap().insert(t.clone());
            }
        }
        PetriNet {
            places,
            transitions,
            pre,
            post,
            initial,
            place_post,
            place_pre,
        }
    }

    pub fn places(&self) -> &BTreeSet<String> {
        &self.places
    }

    pub fn transitions(&self) -> &BTreeSet<String> {
        &self.transitions
    }

    pub fn initial(&self) -> &Marking {
        &self.initial
    }

    pub fn has_place(&self, p: &str) -> bool {
        self.places.contains(p)
    }

    pub fn has_transition(&self, t: &str) -> bool {
        self.transitions.contains(t)
    }

    /// Pre-multiset of a transition. Panics on unknown ids.
    pub fn pre(&self, t: &str) -> &Marking {
        &self.pre[t]
    }

    pub fn post(&self, t: &str) -> &Marking {
        &self.post[t]
    }

    /// Transitions consuming from `p`.
    pub fn place_post(&self, p: &str) -> &BTreeSet<String> {
        &self.place_post[p]
    }

    /// Transitions producing into `p`.
    pub fn place_pre(&self, p: &str) -> &BTreeSet<String> {
        &self.place_pre[p]
    }

    /// All arcs with multiplicities: `(source, target, weight)`.
    pub fn flow(&self) -> Vec<(String, String, u32)> {
        let mut out = Vec::new();
        for t in &self.transitions {
            for (p, n) in self.pre[t].iter() {
                out.push((p.clone(), t.clone(), *n));
            }
            for (p, n) in self.post[t].iter() {
                out.push((t.clone(), p.clone(), *n));
            }
        }
        out
    }

    /// Every arc has multiplicity one and the initial marking is a set.
    pub fn is_set_like(&self) -> bool {
        self.transitions
            .iter()
            .all(|t| self.pre[t].max_count() <= 1 && self.post[t].max_count() <= 1)
            && self.initial.max_count() <= 1
    }

    pub fn is_concurrency_preserving(&self) -> bool {
        self.transitions
            .iter()
            .all(|t| self.pre[t].total() == self.post[t].total())
    }

    pub fn is_enabled(&self, m: &Marking, t: &str) -> bool {
        self.pre.get(t).is_some_and(|pre| m.covers(pre))
    }

    pub fn enabled(&self, m: &Marking) -> Vec<&String> {
        self.transitions
            .iter()
            .filter(|t| m.covers(&self.pre[*t]))
            .collect()
    }

    /// Same net with another initial marking.
    pub fn with_initial(&self, initial: Marking) -> Result<PetriNet, NetError> {
        for p in initial.support() {
            if !self.places.contains(p) {
                return Err(NetError::UnknownNode(p.clone()));
            }
        }
        let mut n = self.clone();
        n.initial = initial;
        Ok(n)
    }
}

pub fn fire(net: &PetriNet, m: &Marking, t: &str) -> Result<Marking, NetError> {
    let pre = net
        .pre
        .get(t)
        .ok_or_else(|| NetError::UnknownTransition(t.to_string()))?;
    if !m.covers(pre) {
        return Err(NetError::NotEnabled(t.to_string()));
    }
    Ok(m.minus(pre)?.plus(&net.post[t]))
}

pub fn is_final(net: &PetriNet, m: &Marking) -> bool {
    net.transitions.iter().all(|t| !m.covers(&net.pre[t]))
}

/// How far [`reachable_markings`] explores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reach {
    /// Markings reachable within this many firings.
    Bounded(usize),
    /// The full reachability set, erroring past `cap` markings.
    Fixpoint { cap: usize },
}

impl Reach {
    pub fn fixpoint() -> Reach {
        Reach::Fixpoint {
            cap: DEFAULT_STATE_CAP,
        }
    }
}

pub fn reachable_markings(net: &PetriNet, mode: Reach) -> Result<BTreeSet<Marking>, NetError> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(net.initial.clone());
    queue.push_back((net.initial.clone(), 0usize));
    while let Some((m, d)) = queue.pop_front() {
        if let Reach::Bounded(b) = mode {
            if d >= b {
                continue;
            }
        }
        for t in net.enabled(&m) {
            let next = fire(net, &m, t)?;
            if !seen.contains(&next) {
                if let Reach::Fixpoint { cap } = mode {
                    if seen.len() >= cap {
                        return Err(NetError::BoundExceeded(cap));
                    }
                }
                seen.insert(next.clone());
                queue.push_back((next, d + 1));
            }
        }
    }
    Ok(seen)
}

/// Structural and behavioural facts about a net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetReport {
    /// `None` when the fixpoint hit the state cap.
    pub one_bounded: Option<bool>,
    pub concurrency_preserving: bool,
    pub set_like: bool,
    pub violations: Vec<String>,
}

pub fn validate_net(net: &PetriNet) -> NetReport {
    validate_net_with_cap(net, DEFAULT_STATE_CAP)
}

pub fn validate_net_with_cap(net: &PetriNet, cap: usize) -> NetReport {
    let mut violations = Vec::new();
    for t in &net.transitions {
        let (i, o) = (net.pre[t].total(), net.post[t].total());
        if i != o {
            violations.push(format!("transition {t} consumes {i} tokens but produces {o}"));
        }
    }
    let concurrency_preserving = violations.is_empty();
    let set_like = net.is_set_like();
    if !set_like {
        violations.push("flow or initial marking has multiplicities above one".into());
    }
    let one_bounded = match reachable_markings(net, Reach::Fixpoint { cap }) {
        Ok(ms) => {
            let bad = ms.iter().find(|m| m.max_count() > 1);
            if let Some(m) = bad {
                violations.push(format!("reachable marking {m} is not 1-bounded"));
            }
            Some(bad.is_none())
        }
        Err(e) => {
            violations.push(e.to_string());
            None
        }
    };
    NetReport {
        one_bounded,
        concurrency_preserving,
        set_like,
        violations,
    }
}
