//! Asynchronous automata over distributed alphabets, built either from a
//! sparse transition table or as a composition of local processes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::traces::{normal_form, DistributedAlphabet, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("action {action:?} of process {process:?} is outside its alphabet")]
    ActionOutsideAlphabet { process: String, action: String },
    #[error("action {0:?} is not defined in the current state")]
    NotDefined(String),
    #[error("unknown process {0:?}")]
    UnknownProcess(String),
    #[error("unknown state {state:?} of process {process:?}")]
    UnknownState { process: String, state: String },
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("transition table for {0:?} is not deterministic")]
    Nondeterministic(String),
    #[error("entry for {action:?} has {got} components, expected {expected}")]
    Arity {
        action: String,
        got: usize,
        expected: usize,
    },
}

/// Global states as sorted (process, state) pairs.
pub type GlobalState = BTreeMap<String, String>;

/// A deterministic asynchronous automaton. Entries of `δ_a` are keyed by the
/// local states of `dom(a)` listed in sorted process order.
#[derive(Debug, Clone)]
pub struct AsyncAutomaton {
    alphabet: Arc<DistributedAlphabet>,
    processes: Vec<String>,
    local_states: BTreeMap<String, BTreeSet<String>>,
    initial: BTreeMap<String, String>,
    delta: BTreeMap<String, BTreeMap<Vec<String>, Vec<String>>>,
    dom_index: BTreeMap<String, Vec<usize>>,
    enabled_index: BTreeMap<(String, String), BTreeSet<String>>,
}

impl AsyncAutomaton {
    pub fn new(
        alphabet: Arc<DistributedAlphabet>,
        local_states: BTreeMap<String, BTreeSet<String>>,
        initial: BTreeMap<String, String>,
        delta: BTreeMap<String, BTreeMap<Vec<String>, Vec<String>>>,
    ) -> Result<Self, AutomatonError> {
        let processes: Vec<String> = local_states.keys().cloned().collect();
        for p in alphabet.processes() {
            if !local_states.contains_key(p) {
                return Err(AutomatonError::UnknownProcess(p.clone()));
            }
        }
        for p in &processes {
            let s = initial
                .get(p)
                .ok_or_else(|| AutomatonError::UnknownProcess(p.clone()))?;
            if !local_states[p].contains(s) {
                return Err(AutomatonError::UnknownState {
                    process: p.clone(),
                    state: s.clone(),
                });
            }
        }
        let mut dom_index = BTreeMap::new();
        for a in alphabet.actions() {
            let d = alphabet.dom(a).unwrap();
            let idx: Vec<usize> = d
                .iter()
                .map(|p| processes.binary_search(p).unwrap())
                .collect();
            dom_index.insert(a.clone(), idx);
        }
        let mut enabled_index: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for (a, entries) in &delta {
            let d: Vec<&String> = alphabet
                .dom(a)
                .ok_or_else(|| AutomatonError::UnknownAction(a.clone()))?
                .iter()
                .collect();
            for (from, to) in entries {
                for v in [from, to] {
                    if v.len() != d.len() {
                        return Err(AutomatonError::Arity {
                            action: a.clone(),
                            got: v.len(),
                            expected: d.len(),
                        });
                    }
                    for (p, s) in d.iter().zip(v) {
                        if !local_states[*p].contains(s) {
                            return Err(AutomatonError::UnknownState {
                                process: (*p).clone(),
                                state: s.clone(),
                            });
                        }
                    }
                }
                for (p, s) in d.iter().zip(from) {
                    enabled_index
                        .entry(((*p).clone(), s.clone()))
                        .or_default()
                        .insert(a.clone());
                }
            }
        }
        Ok(Self {
            alphabet,
            processes,
            local_states,
            initial,
            delta,
            dom_index,
            enabled_index,
        })
    }

    pub fn alphabet(&self) -> &Arc<DistributedAlphabet> {
        &self.alphabet
    }

    /// Processes in sorted order; vector-shaped states follow this order.
    pub fn processes(&self) -> &[String] {
        &self.processes
    }

    pub fn process_index(&self, p: &str) -> Option<usize> {
        self.processes.binary_search_by(|q| q.as_str().cmp(p)).ok()
    }

    pub fn local_states(&self, p: &str) -> &BTreeSet<String> {
        &self.local_states[p]
    }

    pub fn all_local_states(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.local_states
    }

    pub fn initial(&self) -> &BTreeMap<String, String> {
        &self.initial
    }

    pub fn initial_vec(&self) -> Vec<String> {
        self.processes.iter().map(|p| self.initial[p].clone()).collect()
    }

    pub fn delta(&self) -> &BTreeMap<String, BTreeMap<Vec<String>, Vec<String>>> {
        &self.delta
    }

    pub fn entries(&self, a: &str) -> Option<&BTreeMap<Vec<String>, Vec<String>>> {
        self.delta.get(a)
    }

    /// Indices of `dom(a)` in process order.
    pub fn dom_indices(&self, a: &str) -> &[usize] {
        &self.dom_index[a]
    }

    /// Actions with some `δ_a` entry whose `p`-component is `s`.
    pub fn enabled_at(&self, p: &str, s: &str) -> BTreeSet<String> {
        self.enabled_index
            .get(&(p.to_string(), s.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    /// Successor on vector-shaped states.
    pub fn step_vec(&self, states: &[String], a: &str) -> Option<Vec<String>> {
        let idx = self.dom_index.get(a)?;
        let key: Vec<String> = idx.iter().map(|&i| states[i].clone()).collect();
        let to = self.delta.get(a)?.get(&key)?;
        let mut out = states.to_vec();
        for (&i, s) in idx.iter().zip(to) {
            out[i] = s.clone();
        }
        Some(out)
    }

    /// Actions defined on a vector-shaped state, in sorted order.
    pub fn enabled_vec(&self, states: &[String]) -> Vec<String> {
        let mut cand: BTreeSet<&String> = BTreeSet::new();
        for (p, s) in self.processes.iter().zip(states) {
            if let Some(acts) = self.enabled_index.get(&(p.clone(), s.clone())) {
                cand.extend(acts.iter());
            }
        }
        cand.into_iter()
            .filter(|a| self.step_vec(states, a).is_some())
            .cloned()
            .collect()
    }

    pub fn to_vec(&self, g: &GlobalState) -> Vec<String> {
        self.processes.iter().map(|p| g[p].clone()).collect()
    }

    pub fn to_global(&self, v: &[String]) -> GlobalState {
        self.processes.iter().cloned().zip(v.iter().cloned()).collect()
    }

    pub fn enabled(&self, g: &GlobalState) -> Vec<String> {
        self.enabled_vec(&self.to_vec(g))
    }

    /// Global state after a word, if every step is defined.
    pub fn run(&self, word: &[String]) -> Option<Vec<String>> {
        let mut s = self.initial_vec();
        for a in word {
            s = self.step_vec(&s, a)?;
        }
        Some(s)
    }
}

pub fn step(aut: &AsyncAutomaton, global: &GlobalState, a: &str) -> Result<GlobalState, AutomatonError> {
    if !aut.alphabet.contains(a) {
        return Err(AutomatonError::UnknownAction(a.to_string()));
    }
    for p in aut.processes() {
        if !global.contains_key(p) {
            return Err(AutomatonError::UnknownProcess(p.clone()));
        }
    }
    aut.step_vec(&aut.to_vec(global), a)
        .map(|v| aut.to_global(&v))
        .ok_or_else(|| AutomatonError::NotDefined(a.to_string()))
}

/// A finite local automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalProcess {
    pub states: BTreeSet<String>,
    pub initial: String,
    pub transitions: BTreeSet<(String, String, String)>,
}

impl LocalProcess {
    pub fn new(initial: impl Into<String>) -> Self {
        let initial = initial.into();
        Self {
            states: [initial.clone()].into_iter().collect(),
            initial,
            transitions: BTreeSet::new(),
        }
    }

    pub fn edge(&mut self, from: &str, a: &str, to: &str) -> &mut Self {
        self.states.insert(from.to_string());
        self.states.insert(to.to_string());
        self.transitions
            .insert((from.to_string(), a.to_string(), to.to_string()));
        self
    }

    pub fn state(&mut self, s: &str) -> &mut Self {
        self.states.insert(s.to_string());
        self
    }
}

pub fn compose_local(
    procs: &BTreeMap<String, LocalProcess>,
    alphabet: Arc<DistributedAlphabet>,
) -> Result<AsyncAutomaton, AutomatonError> {
    // per process and action: state -> successor
    let mut local: BTreeMap<(&str, &str), BTreeMap<&str, &str>> = BTreeMap::new();
    for (p, lp) in procs {
        for (s, a, s2) in &lp.transitions {
            let owned = alphabet.dom(a).is_some_and(|d| d.contains(p));
            if !owned {
                return Err(AutomatonError::ActionOutsideAlphabet {
                    process: p.clone(),
                    action: a.clone(),
                });
            }
            let m = local.entry((p.as_str(), a.as_str())).or_default();
            if m.insert(s.as_str(), s2.as_str()).is_some_and(|old| old != s2) {
                return Err(AutomatonError::Nondeterministic(a.clone()));
            }
        }
    }
    let mut delta = BTreeMap::new();
    for a in alphabet.actions() {
        let dom: Vec<&String> = alphabet.dom(a).unwrap().iter().collect();
        let mut entries: Vec<(Vec<String>, Vec<String>)> = vec![(Vec::new(), Vec::new())];
        for p in &dom {
            let moves = local.get(&(p.as_str(), a.as_str()));
            let mut next = Vec::new();
            if let Some(moves) = moves {
                for (from, to) in &entries {
                    for (s, s2) in moves {
                        let mut f = from.clone();
                        f.push(s.to_string());
                        let mut t = to.clone();
                        t.push(s2.to_string());
                        next.push((f, t));
                    }
                }
            }
            entries = next;
        }
        let table: BTreeMap<Vec<String>, Vec<String>> = entries.into_iter().collect();
        if !table.is_empty() {
            delta.insert(a.clone(), table);
        }
    }
    let mut local_states = BTreeMap::new();
    let mut initial = BTreeMap::new();
    for (p, lp) in procs {
        local_states.insert(p.clone(), lp.states.clone());
        initial.insert(p.clone(), lp.initial.clone());
    }
    AsyncAutomaton::new(alphabet, local_states, initial, delta)
}

/// All traces of length at most `bound` that the automaton can execute.
pub fn plays_upto(aut: &AsyncAutomaton, bound: usize) -> BTreeSet<Trace> {
    let alpha = aut.alphabet().clone();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(Vec::new());
    queue.push_back((Vec::<String>::new(), aut.initial_vec()));
    while let Some((w, s)) = queue.pop_front() {
        if w.len() >= bound {
            continue;
        }
        for a in aut.enabled_vec(&s) {
            let mut w2 = w.clone();
            w2.push(a.clone());
            let w2 = normal_form(&alpha, &w2);
            if seen.insert(w2.clone()) {
                let s2 = aut.step_vec(&s, &a).unwrap();
                queue.push_back((w2, s2));
            }
        }
    }
    seen.into_iter()
        .map(|w| crate::traces::normalize(&alpha, &w).expect("actions come from the alphabet"))
        .collect()
}
