//! Distributed alphabets, Mazurkiewicz traces in lexicographic normal form,
//! local views and labelled posets of occurrences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("action {0:?} has an empty domain")]
    EmptyDomain(String),
}

/// Actions with the set of processes taking part in each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributedAlphabet {
    dom: BTreeMap<String, BTreeSet<String>>,
    processes: BTreeSet<String>,
}

impl DistributedAlphabet {
    pub fn new<I, A, P, S>(dom: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (A, P)>,
        A: Into<String>,
        P: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        let mut processes = BTreeSet::new();
        for (a, ps) in dom {
            let a = a.into();
            let ps: BTreeSet<String> = ps.into_iter().map(Into::into).collect();
            if ps.is_empty() {
                return Err(TraceError::EmptyDomain(a));
            }
            processes.extend(ps.iter().cloned());
            map.insert(a, ps);
        }
        Ok(Self {
            dom: map,
            processes,
        })
    }

    /// Adds processes that own no action.
    pub fn with_processes<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.processes.extend(extra.into_iter().map(Into::into));
        self
    }

    pub fn actions(&self) -> impl Iterator<Item = &String> {
        self.dom.keys()
    }

    pub fn contains(&self, a: &str) -> bool {
        self.dom.contains_key(a)
    }

    pub fn processes(&self) -> &BTreeSet<String> {
        &self.processes
    }

    pub fn dom(&self, a: &str) -> Option<&BTreeSet<String>> {
        self.dom.get(a)
    }

    /// Actions whose domain contains `p`.
    pub fn sigma(&self, p: &str) -> BTreeSet<String> {
        self.dom
            .iter()
            .filter(|(_, ps)| ps.contains(p))
            .map(|(a, _)| a.clone())
            .collect()
    }

    pub fn dependent(&self, a: &str, b: &str) -> bool {
        match (self.dom.get(a), self.dom.get(b)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => true,
        }
    }

    pub fn independent(&self, a: &str, b: &str) -> bool {
        !self.dependent(a, b)
    }

    fn check(&self, word: &[String]) -> Result<(), TraceError> {
        match word.iter().find(|a| !self.dom.contains_key(*a)) {
            Some(a) => Err(TraceError::UnknownAction(a.clone())),
            None => Ok(()),
        }
    }
}

/// A trace, stored as its lexicographically least linearization.
#[derive(Clone)]
pub struct Trace {
    alphabet: Arc<DistributedAlphabet>,
    word: Vec<String>,
}

impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.word == other.word
    }
}
impl Eq for Trace {}

impl PartialOrd for Trace {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Trace {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.word.cmp(&other.word)
    }
}
impl std::hash::Hash for Trace {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.word.hash(state)
    }
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Trace({self})")
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            write!(f, "ε")
        } else {
            write!(f, "{}", self.word.join(" "))
        }
    }
}

/// Lexicographic normal form of a word, assuming all actions are known.
pub fn normal_form(alpha: &DistributedAlphabet, word: &[String]) -> Vec<String> {
    let n = word.len();
    // preds[i]: number of earlier, still unplaced positions dependent with i
    let mut preds = vec![0usize; n];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for i in 0..j {
            if alpha.dependent(&word[i], &word[j]) {
                preds[j] += 1;
                succs[i].push(j);
            }
        }
    }
    let mut placed = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !placed[i] && preds[i] == 0 && best.is_none_or(|b| word[i] < word[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("dependence is acyclic on positions");
        placed[b] = true;
        for &s in &succs[b] {
            preds[s] -= 1;
        }
        out.push(word[b].clone());
    }
    out
}

pub fn normalize<S: AsRef<str>>(
    alphabet: &Arc<DistributedAlphabet>,
    word: &[S],
) -> Result<Trace, TraceError> {
    let word: Vec<String> = word.iter().map(|s| s.as_ref().to_string()).collect();
    alphabet.check(&word)?;
    Ok(Trace {
        alphabet: alphabet.clone(),
        word: normal_form(alphabet, &word),
    })
}

/// Positions of `word` in the view of `p`: the downward closure of the last
/// `p`-occurrence.
pub fn view_positions(alpha: &DistributedAlphabet, word: &[String], p: &str) -> Vec<usize> {
    let mut procs: BTreeSet<&str> = BTreeSet::new();
    procs.insert(p);
    let mut keep = Vec::new();
    for i in (0..word.len()).rev() {
        if let Some(d) = alpha.dom(&word[i]) {
            if d.iter().any(|q| procs.contains(q.as_str())) {
                keep.push(i);
                procs.extend(d.iter().map(String::as_str));
            }
        }
    }
    keep.reverse();
    keep
}

/// Normal form of `view_p` of a word.
pub fn view_word(alpha: &DistributedAlphabet, word: &[String], p: &str) -> Vec<String> {
    let sub: Vec<String> = view_positions(alpha, word, p)
        .into_iter()
        .map(|i| word[i].clone())
        .collect();
    normal_form(alpha, &sub)
}

pub fn local_view(trace: &Trace, p: &str) -> Trace {
    Trace {
        alphabet: trace.alphabet.clone(),
        word: view_word(&trace.alphabet, &trace.word, p),
    }
}

/// Removes `u` from the front of `w` if `u` is a trace prefix of `w`.
pub fn left_quotient(
    alpha: &DistributedAlphabet,
    w: &[String],
    u: &[String],
) -> Option<Vec<String>> {
    let mut rest: Vec<String> = w.to_vec();
    for a in u {
        let pos = rest.iter().position(|x| x == a)?;
        if rest[..pos].iter().any(|x| alpha.dependent(x, a)) {
            return None;
        }
        rest.remove(pos);
    }
    Some(rest)
}

/// Least upper bound of two traces known to be prefixes of a common trace.
/// Occurrences are matched by (action, index).
pub fn lub_words(alpha: &DistributedAlphabet, u: &[String], v: &[String]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in u {
        *counts.entry(a.as_str()).or_default() += 1;
    }
    let mut out: Vec<String> = u.to_vec();
    for a in v {
        match counts.get_mut(a.as_str()) {
            Some(c) if *c > 0 => *c -= 1,
            _ => out.push(a.clone()),
        }
    }
    normal_form(alpha, &out)
}

impl Trace {
    pub fn empty(alphabet: &Arc<DistributedAlphabet>) -> Trace {
        Trace {
            alphabet: alphabet.clone(),
            word: Vec::new(),
        }
    }

    pub fn alphabet(&self) -> &Arc<DistributedAlphabet> {
        &self.alphabet
    }

    /// The normal form.
    pub fn word(&self) -> &[String] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn push(&self, a: &str) -> Result<Trace, TraceError> {
        let mut w = self.word.clone();
        w.push(a.to_string());
        normalize(&self.alphabet, &w)
    }

    pub fn concat(&self, other: &Trace) -> Trace {
        let mut w = self.word.clone();
        w.extend(other.word.iter().cloned());
        Trace {
            alphabet: self.alphabet.clone(),
            word: normal_form(&self.alphabet, &w),
        }
    }

    /// `self ⊑ other` in the trace prefix order.
    pub fn is_prefix_of(&self, other: &Trace) -> bool {
        left_quotient(&self.alphabet, &other.word, &self.word).is_some()
    }

    pub fn lub(&self, other: &Trace) -> Trace {
        Trace {
            alphabet: self.alphabet.clone(),
            word: lub_words(&self.alphabet, &self.word, &other.word),
        }
    }

    /// The trace is prime when it has exactly one maximal occurrence.
    pub fn is_prime(&self) -> bool {
        let p = poset_of(self);
        p.maximal().len() == 1
    }

    /// Label of the unique maximal occurrence of a prime trace.
    pub fn last(&self) -> Option<String> {
        let p = poset_of(self);
        let m = p.maximal();
        if m.len() == 1 {
            Some(p.labels[m[0]].clone())
        } else {
            None
        }
    }
}

/// Occurrences of a trace ordered by forced precedence.
#[derive(Clone)]
pub struct LabelledPoset {
    alphabet: Arc<DistributedAlphabet>,
    /// Element `i` is occurrence `occurrences[i]` of its label.
    pub labels: Vec<String>,
    pub occurrences: Vec<(String, usize)>,
    /// Reflexive, transitive order: `leq[i][j]` iff `i ≤ j`.
    pub leq: Vec<Vec<bool>>,
}

impl fmt::Debug for LabelledPoset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabelledPoset")
            .field("occurrences", &self.occurrences)
            .finish()
    }
}

impl LabelledPoset {
    /// Builds a poset over `labels` from strict covering pairs; the order
    /// is closed reflexively and transitively.
    pub fn from_relation(
        alphabet: &Arc<DistributedAlphabet>,
        labels: Vec<String>,
        less: &[(usize, usize)],
    ) -> LabelledPoset {
        let n = labels.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, j) in less {
            leq[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut occurrences = Vec::with_capacity(n);
        // occurrence indices follow a linearization of the order
        let order = Self::linear_order(&labels, &leq);
        let mut occ = vec![(String::new(), 0); n];
        for i in order {
            let c = seen.entry(labels[i].as_str()).or_default();
            occ[i] = (labels[i].clone(), *c);
            *c += 1;
        }
        occurrences.extend(occ);
        LabelledPoset {
            alphabet: alphabet.clone(),
            labels,
            occurrences,
            leq,
        }
    }

    fn linear_order(labels: &[String], leq: &[Vec<bool>]) -> Vec<usize> {
        let n = labels.len();
        let mut done = vec![false; n];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut best: Option<usize> = None;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let minimal = (0..n).all(|j| j == i || done[j] || !leq[j][i]);
                if minimal && best.is_none_or(|b| labels[i] < labels[b]) {
                    best = Some(i);
                }
            }
            let b = best.expect("order is antisymmetric");
            done[b] = true;
            out.push(b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn less(&self, i: usize, j: usize) -> bool {
        i != j && self.leq[i][j]
    }

    pub fn maximal(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (0..self.len()).all(|j| !self.less(i, j)))
            .collect()
    }

    /// Some linearization, lexicographically least by label.
    pub fn linearize(&self) -> Vec<String> {
        Self::linear_order(&self.labels, &self.leq)
            .into_iter()
            .map(|i| self.labels[i].clone())
            .collect()
    }

    /// The trace whose dependence order this poset describes.
    pub fn to_trace(&self) -> Trace {
        Trace {
            alphabet: self.alphabet.clone(),
            word: normal_form(&self.alphabet, &self.linearize()),
        }
    }
}

/// Isomorphism of dependence-induced posets, decided on normal forms.
impl PartialEq for LabelledPoset {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.to_trace() == other.to_trace()
    }
}
impl Eq for LabelledPoset {}

pub fn poset_of(trace: &Trace) -> LabelledPoset {
    let w = &trace.word;
    let mut less = Vec::new();
    for j in 0..w.len() {
        for i in 0..j {
            if trace.alphabet.dependent(&w[i], &w[j]) {
                less.push((i, j));
            }
        }
    }
    LabelledPoset::from_relation(&trace.alphabet, w.clone(), &less)
}
