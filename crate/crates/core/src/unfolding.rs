//! Occurrence nets and branching processes: depth-bounded unfolding,
//! causal pasts, the causal/conflict/concurrency classification and a
//! clause-by-clause validator.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nets::{validate_net, Marking, NetBuilder, NetError, PetriNet, DEFAULT_STATE_CAP};
use crate::traces::{DistributedAlphabet, LabelledPoset};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnfoldError {
    #[error("base net is not 1-bounded")]
    NotOneBounded,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("more than {0} cuts explored")]
    CapExceeded(usize),
    #[error("label {0:?} matches more than one enabled event")]
    Ambiguous(String),
    #[error("no event labelled {0:?} is enabled")]
    NotEnabled(String),
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Canonical id of a node from its label and the ids of its preset.
pub fn node_id(label: &str, pre: &[String], index: usize) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    for p in pre {
        h.update([0u8]);
        h.update(p.as_bytes());
    }
    h.update([1u8]);
    h.update(index.to_le_bytes());
    let d = h.finalize();
    let hex: String = d.iter().take(5).map(|b| format!("{b:02x}")).collect();
    format!("{label}#{hex}")
}

/// Dependence of transitions sharing a place: `dom(t) = pre(t) ∪ post(t)`.
pub fn place_alphabet(net: &PetriNet) -> Arc<DistributedAlphabet> {
    let dom = net.transitions().iter().map(|t| {
        let mut ps: BTreeSet<String> = net.pre(t).support().cloned().collect();
        ps.extend(net.post(t).support().cloned());
        if ps.is_empty() {
            ps.insert(format!("~{t}"));
        }
        (t.clone(), ps)
    });
    Arc::new(
        DistributedAlphabet::new(dom)
            .expect("domains are nonempty")
            .with_processes(net.places().iter().cloned()),
    )
}

/// Occurrence net with a homomorphism into a base net.
#[derive(Debug, Clone)]
pub struct BranchingProcess {
    occ: PetriNet,
    lambda: BTreeMap<String, String>,
    base: Arc<PetriNet>,
    height: BTreeMap<String, usize>,
}

/// Relation between two nodes of a branching process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRelation {
    Causal,
    Conflict,
    Concurrent,
}

impl BranchingProcess {
    /// Assembles a branching process without checking it; see
    /// [`validate_branching_process`].
    pub fn from_parts(occ: PetriNet, lambda: BTreeMap<String, String>, base: Arc<PetriNet>) -> Self {
        let mut bp = BranchingProcess {
            occ,
            lambda,
            base,
            height: BTreeMap::new(),
        };
        bp.height = bp.compute_heights();
        bp
    }

    fn compute_heights(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        let order = match self.topological() {
            Some(o) => o,
            None => return h,
        };
        for x in order {
            let v = if self.occ.has_transition(&x) {
                1 + self
                    .occ
                    .pre(&x)
                    .support()
                    .map(|c| h.get(c).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0)
            } else {
                self.occ
                    .place_pre(&x)
                    .iter()
                    .map(|e| h.get(e).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0)
            };
            h.insert(x, v);
        }
        h
    }

    /// Nodes in an order compatible with the flow, or `None` on a cycle.
    fn topological(&self) -> Option<Vec<String>> {
        let mut indeg: BTreeMap<String, usize> = BTreeMap::new();
        for p in self.occ.places() {
            indeg.insert(p.clone(), self.occ.place_pre(p).len());
        }
        for t in self.occ.transitions() {
            indeg.insert(t.clone(), self.occ.pre(t).support().count());
        }
        let mut queue: VecDeque<String> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(x, _)| x.clone())
            .collect();
        let mut out = Vec::new();
        while let Some(x) = queue.pop_front() {
            let succ: Vec<String> = if self.occ.has_transition(&x) {
                self.occ.post(&x).support().cloned().collect()
            } else {
                self.occ.place_post(&x).iter().cloned().collect()
            };
            out.push(x);
            for y in succ {
                let d = indeg.get_mut(&y).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(y);
                }
            }
        }
        (out.len() == indeg.len()).then_some(out)
    }

    pub fn occ_net(&self) -> &PetriNet {
        &self.occ
    }

    pub fn base(&self) -> &Arc<PetriNet> {
        &self.base
    }

    pub fn lambda(&self) -> &BTreeMap<String, String> {
        &self.lambda
    }

    pub fn label(&self, x: &str) -> Option<&str> {
        self.lambda.get(x).map(String::as_str)
    }

    pub fn conditions(&self) -> &BTreeSet<String> {
        self.occ.places()
    }

    pub fn events(&self) -> &BTreeSet<String> {
        self.occ.transitions()
    }

    pub fn is_node(&self, x: &str) -> bool {
        self.occ.has_place(x) || self.occ.has_transition(x)
    }

    /// Longest chain of events up to and including `x`.
    pub fn height(&self, x: &str) -> usize {
        self.height.get(x).copied().unwrap_or(0)
    }

    pub fn initial_cut(&self) -> BTreeSet<String> {
        self.occ.initial().support().cloned().collect()
    }

    /// All nodes `y ≤ x`.
    pub fn ancestors(&self, x: &str) -> Result<BTreeSet<String>, UnfoldError> {
        if !self.is_node(x) {
            return Err(UnfoldError::UnknownNode(x.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![x.to_string()];
        while let Some(y) = stack.pop() {
            if !seen.insert(y.clone()) {
                continue;
            }
            if self.occ.has_transition(&y) {
                stack.extend(self.occ.pre(&y).support().cloned());
            } else {
                stack.extend(self.occ.place_pre(&y).iter().cloned());
            }
        }
        Ok(seen)
    }

    /// Events enabled in a cut, sorted by id.
    pub fn enabled_events(&self, cut: &BTreeSet<String>) -> Vec<String> {
        let m: Marking = cut.iter().cloned().collect();
        self.occ.enabled(&m).into_iter().cloned().collect()
    }

    /// Fires a sequence of base labels, resolving each to its unique enabled
    /// copy. Returns the reached cut.
    pub fn simulate<S: AsRef<str>>(&self, labels: &[S]) -> Result<BTreeSet<String>, UnfoldError> {
        let mut cut = self.initial_cut();
        for l in labels {
            let l = l.as_ref();
            let cands: Vec<String> = self
                .enabled_events(&cut)
                .into_iter()
                .filter(|e| self.lambda.get(e).map(String::as_str) == Some(l))
                .collect();
            match cands.len() {
                0 => return Err(UnfoldError::NotEnabled(l.to_string())),
                1 => {
                    let e = &cands[0];
                    for c in self.occ.pre(e).support() {
                        cut.remove(c);
                    }
                    cut.extend(self.occ.post(e).support().cloned());
                }
                _ => return Err(UnfoldError::Ambiguous(l.to_string())),
            }
        }
        Ok(cut)
    }

    /// All cuts reachable by firing events, up to `cap` cuts.
    pub fn reachable_cuts(&self, cap: usize) -> Result<BTreeSet<BTreeSet<String>>, UnfoldError> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        let init = self.initial_cut();
        seen.insert(init.clone());
        queue.push_back(init);
        while let Some(cut) = queue.pop_front() {
            for e in self.enabled_events(&cut) {
                let mut next = cut.clone();
                for c in self.occ.pre(&e).support() {
                    next.remove(c);
                }
                next.extend(self.occ.post(&e).support().cloned());
                if !seen.contains(&next) {
                    if seen.len() >= cap {
                        return Err(UnfoldError::CapExceeded(cap));
                    }
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
        Ok(seen)
    }

    /// λ-image of a cut.
    pub fn image(&self, cut: &BTreeSet<String>) -> Marking {
        cut.iter().map(|c| self.lambda[c].clone()).collect()
    }
}

/// Hooks that let callers attach data to conditions and prune events while
/// a prefix is built.
pub(crate) struct PrefixHooks<'a, M> {
    pub initial: &'a dyn Fn(&str) -> M,
    pub fire: &'a dyn Fn(&str, &[(&str, &M)]) -> M,
    pub allow: &'a dyn Fn(&str, &[(&str, &M)]) -> Result<bool, String>,
}

/// Builds the prefix of the unfolding whose events have height at most
/// `depth` and pass `allow`. Works on any net; copies of a place in a cut are
/// distinguished individually.
pub(crate) fn build_prefix<M: Clone>(
    base: &Arc<PetriNet>,
    depth: usize,
    cap: usize,
    hooks: &PrefixHooks<'_, M>,
) -> Result<(BranchingProcess, BTreeMap<String, M>), UnfoldError> {
    let mut nb = NetBuilder::new();
    let mut lambda = BTreeMap::new();
    let mut data: BTreeMap<String, M> = BTreeMap::new();
    let mut height: BTreeMap<String, usize> = BTreeMap::new();
    let mut events: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut rejected: BTreeSet<String> = BTreeSet::new();
    let mut init = BTreeSet::new();
    let mut counter: BTreeMap<String, usize> = BTreeMap::new();
    for p in base.initial().tokens() {
        let i = counter.entry(p.clone()).or_default();
        let id = node_id(&p, &[], *i);
        *i += 1;
        nb.place(id.clone()).mark(id.clone());
        data.insert(id.clone(), (hooks.initial)(&p));
        lambda.insert(id.clone(), p.clone());
        height.insert(id.clone(), 0);
        init.insert(id);
    }
    let mut seen: BTreeSet<BTreeSet<String>> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back(init);
    while let Some(cut) = queue.pop_front() {
        let mut by_label: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for c in &cut {
            by_label.entry(lambda[c].clone()).or_default().push(c.clone());
        }
        for t in base.transitions() {
            for combo in choose_preset(base.pre(t), &by_label) {
                let h = combo.iter().map(|c| height[c]).max().unwrap_or(0);
                if h + 1 > depth {
                    continue;
                }
                let mut sorted = combo.clone();
                sorted.sort();
                let eid = node_id(t, &sorted, 0);
                if rejected.contains(&eid) {
                    continue;
                }
                if !events.contains_key(&eid) {
                    let pre: Vec<(&str, &M)> = combo
                        .iter()
                        .map(|c| (lambda[c].as_str(), &data[c]))
                        .collect();
                    if !(hooks.allow)(t, &pre).map_err(UnfoldError::Rejected)? {
                        rejected.insert(eid);
                        continue;
                    }
                    let memo = (hooks.fire)(t, &pre);
                    let mut post_ids = Vec::new();
                    let mut idx: BTreeMap<String, usize> = BTreeMap::new();
                    for p in base.post(t).tokens() {
                        let i = idx.entry(p.clone()).or_default();
                        let cid = node_id(&p, std::slice::from_ref(&eid), *i);
                        *i += 1;
                        nb.place(cid.clone());
                        lambda.insert(cid.clone(), p.clone());
                        data.insert(cid.clone(), memo.clone());
                        height.insert(cid.clone(), h + 1);
                        post_ids.push(cid);
                    }
                    nb.transition(eid.clone(), &sorted, &post_ids);
                    lambda.insert(eid.clone(), t.clone());
                    height.insert(eid.clone(), h + 1);
                    events.insert(eid.clone(), post_ids);
                }
                let mut next = cut.clone();
                for c in &combo {
                    next.remove(c);
                }
                next.extend(events[&eid].iter().cloned());
                if !seen.contains(&next) {
                    if seen.len() >= cap {
                        return Err(UnfoldError::CapExceeded(cap));
                    }
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
    }
    let occ = nb.build()?;
    let bp = BranchingProcess {
        occ,
        lambda,
        base: base.clone(),
        height,
    };
    Ok((bp, data))
}

/// All ways to pick conditions from a cut whose labels form `pre`.
pub(crate) fn choose_preset(pre: &Marking, by_label: &BTreeMap<String, Vec<String>>) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![Vec::new()];
    for (p, n) in pre.iter() {
        let avail = match by_label.get(p) {
            Some(v) if v.len() >= *n as usize => v,
            _ => return Vec::new(),
        };
        let mut next = Vec::new();
        for pick in itertools::Itertools::combinations(avail.iter(), *n as usize) {
            for base in &out {
                let mut b = base.clone();
                b.extend(pick.iter().map(|c| (*c).clone()));
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// The unfolding truncated at event height `depth`.
pub fn unfold(base: &PetriNet, depth: usize) -> Result<BranchingProcess, UnfoldError> {
    if validate_net(base).one_bounded != Some(true) {
        return Err(UnfoldError::NotOneBounded);
    }
    let base = Arc::new(base.clone());
    let hooks = PrefixHooks::<()> {
        initial: &|_| (),
        fire: &|_, _| (),
        allow: &|_, _| Ok(true),
    };
    Ok(build_prefix(&base, depth, DEFAULT_STATE_CAP, &hooks)?.0)
}

/// Events `y ≤ x` as a labelled poset, together with their ids.
pub fn causal_past(
    bp: &BranchingProcess,
    x: &str,
) -> Result<(Vec<String>, LabelledPoset), UnfoldError> {
    let anc = bp.ancestors(x)?;
    let evs: Vec<String> = anc
        .iter()
        .filter(|y| bp.occ.has_transition(y))
        .cloned()
        .collect();
    let index: BTreeMap<&String, usize> = evs.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut less = Vec::new();
    for (j, e) in evs.iter().enumerate() {
        for c in bp.occ.pre(e).support() {
            for f in bp.occ.place_pre(c) {
                if let Some(&i) = index.get(f) {
                    less.push((i, j));
                }
            }
        }
    }
    let labels = evs.iter().map(|e| bp.lambda[e].clone()).collect();
    let alpha = place_alphabet(&bp.base);
    Ok((evs, LabelledPoset::from_relation(&alpha, labels, &less)))
}

pub fn node_relation(bp: &BranchingProcess, x: &str, y: &str) -> Result<NodeRelation, UnfoldError> {
    let ax = bp.ancestors(x)?;
    let ay = bp.ancestors(y)?;
    if ax.contains(y) || ay.contains(x) {
        return Ok(NodeRelation::Causal);
    }
    if in_conflict(bp, &ax, &ay) {
        return Ok(NodeRelation::Conflict);
    }
    Ok(NodeRelation::Concurrent)
}

fn in_conflict(bp: &BranchingProcess, ax: &BTreeSet<String>, ay: &BTreeSet<String>) -> bool {
    for e1 in ax.iter().filter(|e| bp.occ.has_transition(e)) {
        for e2 in ay.iter().filter(|e| bp.occ.has_transition(e)) {
            if e1 != e2
                && bp
                    .occ
                    .pre(e1)
                    .support()
                    .any(|c| bp.occ.pre(e2).get(c) > 0)
            {
                return true;
            }
        }
    }
    false
}

/// Violations of the occurrence-net and homomorphism clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpReport {
    pub violations: Vec<String>,
}

impl BpReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_branching_process(bp: &BranchingProcess) -> BpReport {
    let mut v = Vec::new();
    let occ = &bp.occ;
    let base = &bp.base;
    if !occ.is_set_like() {
        v.push("flow: arc multiplicity above one".to_string());
    }
    for c in occ.places() {
        let producers = occ.place_pre(c).len();
        let marked = occ.initial().get(c);
        if producers == 0 && marked != 1 {
            v.push(format!("initial: {c} has no producer but is not initially marked once"));
        }
        if producers > 0 && marked > 0 {
            v.push(format!("initial: {c} is marked but has a producer"));
        }
        if producers > 1 {
            v.push(format!("backward: {c} has {producers} producers"));
        }
    }
    let acyclic = bp.topological().is_some();
    if !acyclic {
        v.push("order: flow has a cycle".to_string());
    }
    if acyclic {
        for e in occ.transitions() {
            let anc = bp.ancestors(e).unwrap();
            let evs: Vec<&String> = anc.iter().filter(|x| occ.has_transition(x)).collect();
            'outer: for (i, e1) in evs.iter().enumerate() {
                for e2 in &evs[i + 1..] {
                    if occ.pre(e1).support().any(|c| occ.pre(e2).get(c) > 0) {
                        v.push(format!("conflict: {e} is in self-conflict"));
                        break 'outer;
                    }
                }
            }
        }
    }
    for c in occ.places() {
        match bp.lambda.get(c) {
            Some(p) if base.has_place(p) => {}
            _ => v.push(format!("homomorphism: condition {c} is not mapped to a place")),
        }
    }
    for e in occ.transitions() {
        let t = match bp.lambda.get(e) {
            Some(t) if base.has_transition(t) => t,
            _ => {
                v.push(format!("homomorphism: event {e} is not mapped to a transition"));
                continue;
            }
        };
        let img = |m: &Marking| -> Marking {
            m.tokens()
                .into_iter()
                .filter_map(|c| bp.lambda.get(&c).cloned())
                .collect()
        };
        if img(occ.pre(e)) != *base.pre(t) {
            v.push(format!("homomorphism: preset of {e} does not match {t}"));
        }
        if img(occ.post(e)) != *base.post(t) {
            v.push(format!("homomorphism: postset of {e} does not match {t}"));
        }
    }
    let init_img: Marking = occ
        .initial()
        .tokens()
        .into_iter()
        .filter_map(|c| bp.lambda.get(&c).cloned())
        .collect();
    if init_img != *base.initial() {
        v.push("homomorphism: initial marking does not map onto the base".to_string());
    }
    let mut by_key: BTreeMap<(Vec<String>, &String), &String> = BTreeMap::new();
    for e in occ.transitions() {
        if let Some(t) = bp.lambda.get(e) {
            let pre: Vec<String> = occ.pre(e).support().cloned().collect();
            if let Some(other) = by_key.insert((pre, t), e) {
                v.push(format!(
                    "injectivity: {other} and {e} share preset and label {t}"
                ));
            }
        }
    }
    BpReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choice() -> PetriNet {
        NetBuilder::new()
            .places(["A", "B", "C"])
            .transition("l", &["A"], &["B"])
            .transition("r", &["A"], &["C"])
            .mark("A")
            .build()
            .unwrap()
    }

    #[test]
    fn no_transitions_gives_initial_only() {
        let n = NetBuilder::new().places(["A", "B"]).mark("A").mark("B").build().unwrap();
        let bp = unfold(&n, 5).unwrap();
        assert_eq!(bp.conditions().len(), 2);
        assert!(bp.events().is_empty());
        assert!(validate_branching_process(&bp).is_valid());
    }

    #[test]
    fn branches_are_in_conflict() {
        let bp = unfold(&choice(), 3).unwrap();
        assert_eq!(bp.events().len(), 2);
        let b = bp.conditions().iter().find(|c| bp.label(c) == Some("B")).unwrap();
        let c = bp.conditions().iter().find(|c| bp.label(c) == Some("C")).unwrap();
        assert_eq!(node_relation(&bp, b, c).unwrap(), NodeRelation::Conflict);
        assert_eq!(node_relation(&bp, b, b).unwrap(), NodeRelation::Causal);
    }

    #[test]
    fn rejects_unsafe_base() {
        let n = NetBuilder::new().places(["A"]).tokens("A", 2).build().unwrap();
        assert_eq!(unfold(&n, 1).unwrap_err(), UnfoldError::NotOneBounded);
    }

    #[test]
    fn ids_are_deterministic() {
        let a = unfold(&choice(), 2).unwrap();
        let b = unfold(&choice(), 2).unwrap();
        assert_eq!(a.events(), b.events());
        assert!(a.events().iter().all(|e| e.starts_with('l') || e.starts_with('r')));
    }

    #[test]
    fn duplicate_event_breaks_injectivity() {
        let bp = unfold(&choice(), 1).unwrap();
        let mut nb = NetBuilder::new();
        nb.places(bp.conditions().iter().cloned());
        for c in bp.occ_net().initial().support() {
            nb.mark(c.clone());
        }
        let mut lambda = bp.lambda().clone();
        for e in bp.events() {
            let pre: Vec<String> = bp.occ_net().pre(e).support().cloned().collect();
            let post: Vec<String> = bp.occ_net().post(e).support().cloned().collect();
            nb.transition(e.clone(), &pre, &post);
            if bp.label(e) == Some("l") {
                let dup_post = format!("{}-dup", post[0]);
                nb.place(dup_post.clone());
                nb.transition("dup", &pre, std::slice::from_ref(&dup_post));
                lambda.insert("dup".into(), "l".into());
                lambda.insert(dup_post, "B".into());
            }
        }
        let mutated = BranchingProcess::from_parts(nb.build().unwrap(), lambda, bp.base().clone());
        let r = validate_branching_process(&mutated);
        assert!(r.violations.iter().any(|v| v.starts_with("injectivity")), "{r:?}");
    }

    #[test]
    fn simulate_resolves_labels() {
        let bp = unfold(&choice(), 2).unwrap();
        let cut = bp.simulate(&["l"]).unwrap();
        assert_eq!(bp.image(&cut), Marking::from_places(["B"]));
        assert_eq!(bp.simulate(&["l", "r"]).unwrap_err(), UnfoldError::NotEnabled("r".into()));
    }
}
