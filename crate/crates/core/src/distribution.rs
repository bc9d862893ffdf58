//! Slice distributions, singular net distributions, communication graphs
//! and the 3-SAT gadget net.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use itertools::Itertools;
use thiserror::Error;

use crate::nets::{reachable_markings, validate_net, Marking, NetBuilder, NetError, PetriNet, Reach, DEFAULT_STATE_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("net is not concurrency-preserving")]
    NotConcurrencyPreserving,
    #[error("search exceeded {0} steps")]
    SizeLimit(usize),
    #[error("incompatible family: {0}")]
    IncompatibleFamily(String),
    #[error("malformed formula: {0}")]
    MalformedFormula(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Default number of search nodes before giving up.
pub const DEFAULT_SEARCH_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub places: BTreeSet<String>,
    pub transitions: BTreeSet<String>,
    pub initial: String,
}

/// Slices ordered by their initial place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceDistribution {
    pub slices: Vec<Slice>,
}

impl SliceDistribution {
    pub fn slice_of(&self, place: &str) -> Option<usize> {
        self.slices.iter().position(|s| s.places.contains(place))
    }

    /// Slices whose transitions include `t`.
    pub fn slices_with(&self, t: &str) -> Vec<usize> {
        (0..self.slices.len())
            .filter(|&i| self.slices[i].transitions.contains(t))
            .collect()
    }

    /// The parallel composition of the slices over the flow of `net`.
    pub fn compose(&self, net: &PetriNet) -> Result<PetriNet, NetError> {
        let mut b = NetBuilder::new();
        for s in &self.slices {
            b.places(s.places.iter().cloned());
            b.mark(s.initial.clone());
        }
        let all: BTreeSet<&String> = self.slices.iter().flat_map(|s| &s.transitions).collect();
        for t in all {
            let mut pre = Vec::new();
            let mut post = Vec::new();
            for s in self.slices.iter().filter(|s| s.transitions.contains(t)) {
                pre.extend(net.pre(t).support().filter(|p| s.places.contains(*p)).cloned());
                post.extend(net.post(t).support().filter(|p| s.places.contains(*p)).cloned());
            }
            b.transition(t.clone(), &pre, &post);
        }
        b.build()
    }

    /// Each slice as a singular net with identity labelling.
    pub fn to_snd(&self, net: &PetriNet) -> Result<SingularNetDistribution, NetError> {
        let mut members = Vec::new();
        for s in &self.slices {
            let mut b = NetBuilder::new();
            b.places(s.places.iter().cloned()).mark(s.initial.clone());
            let mut pi = BTreeMap::new();
            for p in &s.places {
                pi.insert(p.clone(), p.clone());
            }
            for t in &s.transitions {
                let pre: Vec<String> = net.pre(t).support().filter(|p| s.places.contains(*p)).cloned().collect();
                let post: Vec<String> = net.post(t).support().filter(|p| s.places.contains(*p)).cloned().collect();
                b.transition(t.clone(), &pre, &post);
                pi.insert(t.clone(), t.clone());
            }
            members.push(SingularNet { net: b.build()?, pi });
        }
        Ok(SingularNetDistribution { members })
    }
}

/// Violations of the slice clauses, the partition requirement and
/// recomposition.
pub fn validate_slice_distribution(net: &PetriNet, d: &SliceDistribution) -> Vec<String> {
    let mut v = Vec::new();
    let mut seen: BTreeMap<&String, usize> = BTreeMap::new();
    for (i, s) in d.slices.iter().enumerate() {
        for p in &s.places {
            if !net.has_place(p) {
                v.push(format!("slice {i}: unknown place {p}"));
            }
            if let Some(j) = seen.insert(p, i) {
                v.push(format!("place {p} in slices {j} and {i}"));
            }
            for t in net.place_post(p) {
                if !s.transitions.contains(t) {
                    v.push(format!("slice {i}: {t} leaves {p} but is missing"));
                }
            }
        }
        let init: Vec<&String> = net.initial().support().filter(|p| s.places.contains(*p)).collect();
        if init != vec![&s.initial] || net.initial().get(&s.initial) != 1 {
            v.push(format!("slice {i}: initial marking is not a single token on {}", s.initial));
        }
        for t in &s.transitions {
            let pre = net.pre(t).support().filter(|p| s.places.contains(*p)).count();
            let post = net.post(t).support().filter(|p| s.places.contains(*p)).count();
            if pre != 1 || post != 1 {
                v.push(format!("slice {i}: {t} has {pre} pre and {post} post places"));
            }
        }
    }
    for p in net.places() {
        if !seen.contains_key(p) {
            v.push(format!("place {p} is in no slice"));
        }
    }
    match d.compose(net) {
        Ok(c) if c.flow() == net.flow() && c.initial() == net.initial() && c.places() == net.places() && c.transitions() == net.transitions() => {}
        Ok(_) => v.push("composition differs from the net".to_string()),
        Err(e) => v.push(format!("composition failed: {e}")),
    }
    v
}

/// Backtracking over slice assignments of token-flow groups. `visit` gets
/// each complete assignment (slice index per place) and returns true to stop.
fn search_slices(
    net: &PetriNet,
    cap: usize,
    visit: &mut dyn FnMut(&BTreeMap<String, usize>) -> bool,
) -> Result<(), DistError> {
    let report = validate_net(net);
    if report.one_bounded != Some(true) || !report.concurrency_preserving {
        return Ok(());
    }
    if net.transitions().iter().any(|t| net.pre(t).is_empty()) {
        return Ok(());
    }
    let places: Vec<&String> = net.places().iter().collect();
    let idx: BTreeMap<&String, usize> = places.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    // a token moving along a one-to-one transition stays in its slice
    let mut parent: Vec<usize> = (0..places.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let n = parent[y];
            parent[y] = r;
            y = n;
        }
        r
    }
    for t in net.transitions() {
        let pre = net.pre(t);
        let post = net.post(t);
        if pre.total() == 1 && post.total() == 1 {
            let a = idx[pre.support().next().unwrap()];
            let b = idx[post.support().next().unwrap()];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let initial: Vec<&String> = net.initial().support().collect();
    let k = initial.len();
    let mut group_of = vec![0usize; places.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..places.len() {
        let r = find(&mut parent, i);
        let g = *root_group.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
        group_of[i] = g;
    }
    let mut fixed: Vec<Option<usize>> = vec![None; groups.len()];
    for (s, p) in initial.iter().enumerate() {
        let g = group_of[idx[p]];
        if fixed[g].is_some() {
            return Ok(());
        }
        fixed[g] = Some(s);
    }
    // transitions touching each group, for incremental checks
    let tlist: Vec<(Vec<usize>, Vec<usize>)> = net
        .transitions()
        .iter()
        .map(|t| {
            (
                net.pre(t).support().map(|p| idx[p]).collect(),
                net.post(t).support().map(|p| idx[p]).collect(),
            )
        })
        .collect();
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (ti, (pre, post)) in tlist.iter().enumerate() {
        for &p in pre.iter().chain(post) {
            let g = group_of[p];
            if touching[g].last() != Some(&ti) {
                touching[g].push(ti);
            }
        }
    }
    let order: Vec<usize> = (0..groups.len()).collect();
    let mut assign: Vec<Option<usize>> = vec![None; places.len()];
    let mut steps = 0usize;

    fn consistent(tl: &(Vec<usize>, Vec<usize>), assign: &[Option<usize>]) -> bool {
        let mut pre_s = BTreeSet::new();
        let mut complete = true;
        for &p in &tl.0 {
            match assign[p] {
                Some(s) => {
                    if !pre_s.insert(s) {
                        return false;
                    }
                }
                None => complete = false,
            }
        }
        let mut post_s = BTreeSet::new();
        for &p in &tl.1 {
            match assign[p] {
                Some(s) => {
                    if !post_s.insert(s) {
                        return false;
                    }
                }
                None => complete = false,
            }
        }
        !complete || pre_s == post_s
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        pos: usize,
        order: &[usize],
        groups: &[Vec<usize>],
        fixed: &[Option<usize>],
        touching: &[Vec<usize>],
        tlist: &[(Vec<usize>, Vec<usize>)],
        k: usize,
        assign: &mut Vec<Option<usize>>,
        steps: &mut usize,
        cap: usize,
        places: &[&String],
        visit: &mut dyn FnMut(&BTreeMap<String, usize>) -> bool,
    ) -> Result<bool, DistError> {
        if pos == order.len() {
            let m = places
                .iter()
                .enumerate()
                .map(|(i, p)| ((*p).clone(), assign[i].unwrap()))
                .collect();
            return Ok(visit(&m));
        }
        let g = order[pos];
        let choices: Vec<usize> = match fixed[g] {
            Some(s) => vec![s],
            None => (0..k).collect(),
        };
        for s in choices {
            *steps += 1;
            if *steps > cap {
                return Err(DistError::SizeLimit(cap));
            }
            for &p in &groups[g] {
                assign[p] = Some(s);
            }
            if touching[g].iter().all(|&t| consistent(&tlist[t], assign))
                && rec(pos + 1, order, groups, fixed, touching, tlist, k, assign, steps, cap, places, visit)?
            {
                return Ok(true);
            }
            for &p in &groups[g] {
                assign[p] = None;
            }
        }
        Ok(false)
    }

    rec(
        0, &order, &groups, &fixed, &touching, &tlist, k, &mut assign, &mut steps, cap, &places, visit,
    )?;
    Ok(())
}

fn distribution_from(net: &PetriNet, assign: &BTreeMap<String, usize>) -> SliceDistribution {
    let initial: Vec<&String> = net.initial().support().collect();
    let mut slices: Vec<Slice> = initial
        .iter()
        .map(|p| Slice {
            places: BTreeSet::new(),
            transitions: BTreeSet::new(),
            initial: (*p).clone(),
        })
        .collect();
    for (p, &s) in assign {
        slices[s].places.insert(p.clone());
    }
    for s in &mut slices {
        for p in &s.places {
            s.transitions.extend(net.place_post(p).iter().cloned());
        }
    }
    SliceDistribution { slices }
}

pub fn find_slice_distribution(net: &PetriNet) -> Result<Option<SliceDistribution>, DistError> {
    find_slice_distribution_with_cap(net, DEFAULT_SEARCH_CAP)
}

pub fn find_slice_distribution_with_cap(
    net: &PetriNet,
    cap: usize,
) -> Result<Option<SliceDistribution>, DistError> {
    let mut found = None;
    search_slices(net, cap, &mut |a| {
        found = Some(distribution_from(net, a));
        true
    })?;
    Ok(found)
}

/// All slice distributions of the net.
pub fn all_slice_distributions(net: &PetriNet, cap: usize) -> Result<Vec<SliceDistribution>, DistError> {
    let mut out = Vec::new();
    search_slices(net, cap, &mut |a| {
        out.push(distribution_from(net, a));
        false
    })?;
    Ok(out)
}

pub fn acyclic_distribution_exists(net: &PetriNet) -> Result<bool, DistError> {
    let mut found = false;
    search_slices(net, DEFAULT_SEARCH_CAP, &mut |a| {
        found = communication_graph(&distribution_from(net, a)).is_acyclic();
        found
    })?;
    Ok(found)
}

/// A one-token net labelled into a base net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularNet {
    pub net: PetriNet,
    pub pi: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularNetDistribution {
    pub members: Vec<SingularNet>,
}

/// Composition of a compatible family with the union of the labellings.
pub fn compose_snd(snd: &SingularNetDistribution) -> Result<(PetriNet, BTreeMap<String, String>), DistError> {
    let mut b = NetBuilder::new();
    let mut pi: BTreeMap<String, String> = BTreeMap::new();
    let mut owner: BTreeMap<&String, usize> = BTreeMap::new();
    let mut flows: BTreeMap<&String, (Vec<String>, Vec<String>)> = BTreeMap::new();
    for (i, m) in snd.members.iter().enumerate() {
        for p in m.net.places() {
            if let Some(j) = owner.insert(p, i) {
                return Err(DistError::IncompatibleFamily(format!("place {p} in members {j} and {i}")));
            }
            b.place(p.clone());
            if let Some(l) = m.pi.get(p) {
                pi.insert(p.clone(), l.clone());
            }
        }
        for (p, n) in m.net.initial().iter() {
            b.tokens(p.clone(), *n);
        }
        for t in m.net.transitions() {
            let l = m.pi.get(t).cloned().unwrap_or_default();
            if let Some(old) = pi.insert(t.clone(), l.clone()) {
                if old != l {
                    return Err(DistError::IncompatibleFamily(format!("{t} labelled {old} and {l}")));
                }
            }
            let e = flows.entry(t).or_default();
            e.0.extend(m.net.pre(t).tokens());
            e.1.extend(m.net.post(t).tokens());
        }
    }
    for (t, (pre, post)) in flows {
        b.transition(t.clone(), &pre, &post);
    }
    Ok((b.build()?, pi))
}

fn image(m: &Marking, pi: &BTreeMap<String, String>) -> Marking {
    let mut out = Marking::new();
    for (p, n) in m.iter() {
        out.add_n(pi[p].clone(), *n);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SndReport {
    pub violations: Vec<String>,
    /// The maximality clause was checked on a capped state space.
    pub bounded: bool,
}

impl SndReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the singular-net clauses of every member, compatibility, and the
/// four distribution clauses of the composition. Of the flow clause only the
/// forward direction is checked.
pub fn validate_snd(base: &PetriNet, snd: &SingularNetDistribution) -> SndReport {
    validate_snd_with_cap(base, snd, DEFAULT_STATE_CAP)
}

pub fn validate_snd_with_cap(base: &PetriNet, snd: &SingularNetDistribution, cap: usize) -> SndReport {
    let mut v = Vec::new();
    let base_flow: BTreeSet<(String, String)> = base.flow().into_iter().map(|(a, b, _)| (a, b)).collect();
    for (i, m) in snd.members.iter().enumerate() {
        let n = &m.net;
        if n.initial().total() != 1 {
            v.push(format!("member {i}: initial marking has {} tokens", n.initial().total()));
        }
        let mut labels = BTreeSet::new();
        for p in n.places() {
            match m.pi.get(p) {
                Some(l) if base.has_place(l) => {
                    if !labels.insert(l) {
                        v.push(format!("member {i}: two copies of {l}"));
                    }
                }
                _ => v.push(format!("member {i}: place {p} not labelled by a place")),
            }
        }
        for t in n.transitions() {
            if n.pre(t).total() != 1 || n.post(t).total() != 1 {
                v.push(format!("member {i}: {t} is not one-in one-out"));
            }
            if !m.pi.get(t).is_some_and(|l| base.has_transition(l)) {
                v.push(format!("member {i}: transition {t} not labelled by a transition"));
            }
        }
        if v.iter().any(|s| s.starts_with(&format!("member {i}:"))) {
            continue;
        }
        for p in n.initial().support() {
            if base.initial().get(&m.pi[p]) == 0 {
                v.push(format!("member {i}: initial {p} not labelled into the initial marking"));
            }
        }
        let tlabels: BTreeSet<&String> = n.transitions().iter().map(|t| &m.pi[t]).collect();
        for p in n.places() {
            for t in base.place_post(&m.pi[p]) {
                if !tlabels.contains(t) {
                    v.push(format!("member {i}: no copy of {t}, which leaves the label of {p}"));
                }
            }
        }
        for (x, y, _) in n.flow() {
            if !base_flow.contains(&(m.pi[&x].clone(), m.pi[&y].clone())) {
                v.push(format!("member {i}: flow {x}->{y} has no base counterpart"));
            }
        }
    }
    if !v.is_empty() {
        return SndReport { violations: v, bounded: false };
    }
    let (comp, pi) = match compose_snd(snd) {
        Ok(x) => x,
        Err(e) => {
            return SndReport {
                violations: vec![e.to_string()],
                bounded: false,
            }
        }
    };
    if image(comp.initial(), &pi) != *base.initial() {
        v.push("initial marking image differs".to_string());
    }
    let mut by_pre: BTreeMap<(String, Marking), Vec<&String>> = BTreeMap::new();
    for t in comp.transitions() {
        let l = &pi[t];
        if image(comp.pre(t), &pi) != *base.pre(l) {
            v.push(format!("preset of {t} does not map onto preset of {l}"));
        }
        if image(comp.post(t), &pi) != *base.post(l) {
            v.push(format!("postset of {t} does not map onto postset of {l}"));
        }
        by_pre.entry((l.clone(), comp.pre(t).clone())).or_default().push(t);
    }
    for ((l, _), ts) in &by_pre {
        if ts.len() > 1 {
            v.push(format!("copies of {l} share a preset: {}", ts.iter().join(", ")));
        }
    }
    let (reach, bounded) = match reachable_markings(&comp, Reach::Fixpoint { cap }) {
        Ok(r) => (r, false),
        Err(_) => (
            reachable_markings(&comp, Reach::Bounded(comp.transitions().len() + 4)).unwrap_or_default(),
            true,
        ),
    };
    for m in &reach {
        let tokens = m.tokens();
        for t in base.transitions() {
            let pre = base.pre(t);
            let k = pre.total() as usize;
            for c in tokens.iter().combinations(k) {
                let cm: Marking = c.iter().map(|p| (*p).clone()).collect();
                if image(&cm, &pi) != *pre {
                    continue;
                }
                if !by_pre.contains_key(&(t.clone(), cm.clone())) {
                    v.push(format!("no copy of {t} from {cm}"));
                }
            }
        }
    }
    v.sort();
    v.dedup();
    SndReport { violations: v, bounded }
}

/// Builds a singular net distribution by the constructive method: one
/// member per initial token, each starting with a copy of every place.
/// When a new transition copy is created, the post places are assigned to
/// the involved members so that as few place labels as possible are shared
/// between members, ties broken by the lexicographically least assignment.
pub fn build_snd(net: &PetriNet) -> Result<SingularNetDistribution, DistError> {
    build_snd_with_cap(net, DEFAULT_STATE_CAP)
}

pub fn build_snd_with_cap(net: &PetriNet, cap: usize) -> Result<SingularNetDistribution, DistError> {
    if !net.is_concurrency_preserving() {
        return Err(DistError::NotConcurrencyPreserving);
    }
    let init = net.initial().tokens();
    let k = init.len();
    struct Copy {
        id: String,
        label: String,
        pre: Vec<(usize, String)>,
        post: Vec<(usize, String)>,
    }
    let mut copies: Vec<Copy> = Vec::new();
    let mut counter: BTreeMap<String, usize> = BTreeMap::new();
    let mut users: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, p) in init.iter().enumerate() {
        users.entry(p.clone()).or_default().insert(i);
    }
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back(init.clone());
    while let Some(state) = queue.pop_front() {
        for t in net.transitions() {
            let pre = net.pre(t);
            let n = pre.total() as usize;
            for c in (0..k).combinations(n) {
                let labels: Marking = c.iter().map(|&i| state[i].clone()).collect();
                if labels != *pre {
                    continue;
                }
                // pre places of a copy are fixed by the member positions
                let key_full: Vec<(usize, String)> = c.iter().map(|&i| (i, state[i].clone())).collect();
                let existing = copies
                    .iter()
                    .position(|cp| cp.label == *t && cp.pre == key_full);
                let ci = match existing {
                    Some(ci) => ci,
                    None => {
                        let post_places = net.post(t).tokens();
                        let mut best: Option<(usize, Vec<usize>)> = None;
                        for perm in (0..post_places.len()).permutations(post_places.len()) {
                            let mut u = users.clone();
                            for (j, &m) in c.iter().enumerate() {
                                u.entry(post_places[perm[j]].clone()).or_default().insert(m);
                            }
                            let cost = u.values().filter(|s| s.len() > 1).count();
                            if best.as_ref().is_none_or(|(bc, _)| cost < *bc) {
                                best = Some((cost, perm));
                            }
                        }
                        let perm = best.map(|(_, p)| p).unwrap_or_default();
                        let post: Vec<(usize, String)> = c
                            .iter()
                            .enumerate()
                            .map(|(j, &m)| (m, post_places[perm[j]].clone()))
                            .collect();
                        for (m, p) in &post {
                            users.entry(p.clone()).or_default().insert(*m);
                        }
                        let cnt = counter.entry(t.clone()).or_default();
                        *cnt += 1;
                        copies.push(Copy {
                            id: format!("{t}@{cnt}"),
                            label: t.clone(),
                            pre: key_full,
                            post,
                        });
                        copies.len() - 1
                    }
                };
                let mut next = state.clone();
                for (m, p) in &copies[ci].post {
                    next[*m] = p.clone();
                }
                if !seen.contains(&next) {
                    if seen.len() >= cap {
                        return Err(DistError::SizeLimit(cap));
                    }
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
    }
    // Postset covering: a member holding a place must carry a copy of every
    // transition leaving its label. Copies added here have presets that are
    // never marked together, otherwise the loop above would have added them.
    loop {
        let mut missing = None;
        'find: for (label, ms) in &users {
            for &m in ms {
                for t in net.place_post(label) {
                    if !copies.iter().any(|cp| cp.label == *t && cp.pre.iter().any(|(x, _)| *x == m)) {
                        missing = Some((m, label.clone(), t.clone()));
                        break 'find;
                    }
                }
            }
        }
        let Some((m, label, t)) = missing else { break };
        let mut rest = net.pre(&t).tokens();
        let at = rest.iter().position(|p| *p == label).expect("label in preset");
        rest.remove(at);
        let others: Vec<usize> = (0..k).filter(|&x| x != m).take(rest.len()).collect();
        if others.len() < rest.len() {
            break;
        }
        let mut pre = vec![(m, label)];
        pre.extend(others.iter().copied().zip(rest));
        pre.sort();
        let post: Vec<(usize, String)> = pre.iter().map(|(x, _)| *x).zip(net.post(&t).tokens()).collect();
        for (x, p) in pre.iter().chain(&post) {
            users.entry(p.clone()).or_default().insert(*x);
        }
        let cnt = counter.entry(t.clone()).or_default();
        *cnt += 1;
        copies.push(Copy {
            id: format!("{t}@{cnt}"),
            label: t,
            pre,
            post,
        });
    }
    let place_id = |m: usize, p: &str| format!("{p}@{}", m + 1);
    let mut members = Vec::new();
    for m in 0..k {
        let mut b = NetBuilder::new();
        let mut pi = BTreeMap::new();
        let mut used: BTreeSet<String> = users
            .iter()
            .filter(|(_, s)| s.contains(&m))
            .map(|(p, _)| p.clone())
            .collect();
        used.insert(init[m].clone());
        for p in &used {
            b.place(place_id(m, p));
            pi.insert(place_id(m, p), p.clone());
        }
        b.mark(place_id(m, &init[m]));
        for cp in &copies {
            let pre: Vec<String> = cp.pre.iter().filter(|(x, _)| *x == m).map(|(_, p)| place_id(m, p)).collect();
            if pre.is_empty() {
                continue;
            }
            let post: Vec<String> = cp.post.iter().filter(|(x, _)| *x == m).map(|(_, p)| place_id(m, p)).collect();
            b.transition(cp.id.clone(), &pre, &post);
            pi.insert(cp.id.clone(), cp.label.clone());
        }
        members.push(SingularNet { net: b.build()?, pi });
    }
    Ok(SingularNetDistribution { members })
}

/// Undirected graph over distribution members with an edge wherever two
/// members share a transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunicationGraph {
    pub vertices: Vec<String>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl CommunicationGraph {
    pub fn from_members(members: &[(String, BTreeSet<String>)]) -> Self {
        let mut edges = BTreeSet::new();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                if !members[i].1.is_disjoint(&members[j].1) {
                    edges.insert((i, j));
                }
            }
        }
        Self {
            vertices: members.iter().map(|(n, _)| n.clone()).collect(),
            edges,
        }
    }

    pub fn is_acyclic(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
            }
            parent[x]
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }
}

/// Anything made of members with transition sets.
pub trait Members {
    fn member_transitions(&self) -> Vec<(String, BTreeSet<String>)>;
}

impl Members for SliceDistribution {
    fn member_transitions(&self) -> Vec<(String, BTreeSet<String>)> {
        self.slices
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("s{}", i + 1), s.transitions.clone()))
            .collect()
    }
}

impl Members for SingularNetDistribution {
    fn member_transitions(&self) -> Vec<(String, BTreeSet<String>)> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| (format!("s{}", i + 1), m.net.transitions().clone()))
            .collect()
    }
}

pub fn communication_graph<D: Members>(d: &D) -> CommunicationGraph {
    CommunicationGraph::from_members(&d.member_transitions())
}

/// A 3-CNF formula; literal `i` is variable `i`, `-i` its negation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub vars: usize,
    pub clauses: Vec<[i32; 3]>,
}

impl Formula {
    pub fn satisfiable(&self) -> bool {
        (0u64..1 << self.vars).any(|bits| {
            self.clauses.iter().all(|c| {
                c.iter().any(|&l| {
                    let v = (bits >> (l.unsigned_abs() - 1)) & 1 == 1;
                    if l > 0 {
                        v
                    } else {
                        !v
                    }
                })
            })
        })
    }
}

/// Parses clauses like `1 -2 3; -1 2 2`.
impl std::str::FromStr for Formula {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut clauses = Vec::new();
        let mut vars = 0;
        for part in s.split([';', '\n']).map(str::trim).filter(|p| !p.is_empty()) {
            let lits: Vec<i32> = part
                .split_whitespace()
                .map(|x| x.parse::<i32>().map_err(|e| DistError::MalformedFormula(format!("{x}: {e}"))))
                .collect::<Result<_, _>>()?;
            let c: [i32; 3] = lits
                .try_into()
                .map_err(|_| DistError::MalformedFormula(format!("clause {part:?} needs three literals")))?;
            for l in c {
                vars = vars.max(l.unsigned_abs() as usize);
            }
            clauses.push(c);
        }
        Ok(Formula { vars, clauses })
    }
}

/// The reduction net for a formula. Places: `top`, `bot`, `x{i}`, `nx{i}`,
/// per clause `V{j}` with two padding places `D{j}a`, `D{j}b`, and one
/// gadget place `g{k}` between consecutive `V` places.
pub fn gen_3sat_net(f: &Formula) -> Result<PetriNet, DistError> {
    if f.clauses.is_empty() {
        return Err(DistError::MalformedFormula("no clauses".to_string()));
    }
    for c in &f.clauses {
        for &l in c {
            if l == 0 || l.unsigned_abs() as usize > f.vars {
                return Err(DistError::MalformedFormula(format!("literal {l} out of range")));
            }
        }
    }
    let lit = |l: i32| {
        if l > 0 {
            format!("x{l}")
        } else {
            format!("nx{}", -l)
        }
    };
    let mut b = NetBuilder::new();
    b.places(["top", "bot"]).mark("top").mark("bot");
    for i in 1..=f.vars {
        b.places([format!("x{i}"), format!("nx{i}")]);
        b.transition(format!("tx{i}"), &["top".to_string(), "bot".to_string()], &[format!("x{i}"), format!("nx{i}")]);
    }
    let m = f.clauses.len();
    for (j, c) in f.clauses.iter().enumerate() {
        let j = j + 1;
        let (da, v, db) = (format!("D{j}a"), format!("V{j}"), format!("D{j}b"));
        b.places([da.clone(), v.clone(), db.clone()]);
        let pre: BTreeSet<String> = c.iter().map(|&l| lit(l)).collect();
        let pre: Vec<String> = pre.into_iter().collect();
        b.transition(format!("C{j}"), &pre, &[da, v, db]);
    }
    for k in 1..m {
        let (g, v, w) = (format!("g{k}"), format!("V{k}"), format!("V{}", k + 1));
        b.place(g.clone()).mark(g.clone());
        b.transition(format!("L{k}"), &[v.clone()], &[w.clone()]);
        b.transition(format!("G{k}a"), &[v.clone(), g.clone()], &[v, g.clone()]);
        b.transition(format!("G{k}b"), &[w.clone(), g.clone()], &[w, g]);
    }
    Ok(b.build()?)
}
