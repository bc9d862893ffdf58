mod common;

use std::collections::BTreeSet;

use common::*;
use gamebridge::distribution::{
    acyclic_distribution_exists, all_slice_distributions, build_snd, communication_graph, compose_snd,
    find_slice_distribution, gen_3sat_net, validate_slice_distribution, validate_snd, Formula, DEFAULT_SEARCH_CAP,
};
use gamebridge::nets::{reachable_markings, validate_net, Marking, NetBuilder, PetriNet, Reach};
use proptest::prelude::*;

/// Two tokens on `A`, one on `B`; `a` needs one of each, `b` returns `D` to `B`.
fn two_on_a() -> PetriNet {
    NetBuilder::new()
        .places(["A", "B", "C", "D"])
        .tokens("A", 2)
        .mark("B")
        .transition("a", &["A", "B"], &["C", "D"])
        .transition("b", &["D"], &["B"])
        .build()
        .unwrap()
}

fn image(m: &Marking, pi: &std::collections::BTreeMap<String, String>) -> Marking {
    let mut out = Marking::new();
    for (p, n) in m.iter() {
        out.add_n(pi[p].clone(), *n);
    }
    out
}

fn reach_image(snd: &gamebridge::distribution::SingularNetDistribution) -> BTreeSet<Marking> {
    let (comp, pi) = compose_snd(snd).unwrap();
    reachable_markings(&comp, Reach::fixpoint()).unwrap().iter().map(|m| image(m, &pi)).collect()
}

#[test]
fn sample_has_one_distribution() {
    let g = pg("fig5.pg");
    let all = all_slice_distributions(g.net(), DEFAULT_SEARCH_CAP).unwrap();
    assert_eq!(all.len(), 1);
    let places: Vec<BTreeSet<String>> = all[0].slices.iter().map(|s| s.places.clone()).collect();
    assert_eq!(places, vec![set(["A", "B"]), set(["C", "D"])]);
    assert!(validate_slice_distribution(g.net(), &all[0]).is_empty());
    let cg = communication_graph(&all[0]);
    assert_eq!(cg.edges.len(), 1);
    assert!(cg.is_acyclic());
}

#[test]
fn burglary_is_a_star() {
    let g = pg("burglary.pg");
    let d = find_slice_distribution(g.net()).unwrap().unwrap();
    let cg = communication_graph(&d);
    assert!(cg.is_acyclic());
    let hub = (0..cg.vertices.len()).max_by_key(|v| cg.edges.iter().filter(|(a, b)| a == v || b == v).count()).unwrap();
    assert!(cg.edges.iter().all(|(a, b)| *a == hub || *b == hub));
}

#[test]
fn unsafe_net_has_no_slices_but_an_snd() {
    let net = two_on_a();
    let rep = validate_net(&net);
    assert!(rep.concurrency_preserving);
    assert_eq!(rep.one_bounded, Some(false));
    assert_eq!(find_slice_distribution(&net).unwrap(), None);
    let snd = build_snd(&net).unwrap();
    assert_eq!(snd.members.len(), 3);
    let rep = validate_snd(&net, &snd);
    assert!(rep.is_valid(), "{:?}", rep.violations);
    assert_eq!(reach_image(&snd), reachable_markings(&net, Reach::fixpoint()).unwrap());
}

#[test]
fn singleton_family_composes_to_itself() {
    let net = NetBuilder::new().places(["A", "B"]).mark("A").transition("t", &["A"], &["B"]).transition("u", &["B"], &["A"]).build().unwrap();
    let snd = build_snd(&net).unwrap();
    assert_eq!(snd.members.len(), 1);
    let (comp, pi) = compose_snd(&snd).unwrap();
    assert_eq!(comp, snd.members[0].net);
    let labels: BTreeSet<&String> = pi.values().collect();
    assert_eq!(labels.len(), 4);
}

#[test]
fn gadget_has_no_distribution_at_all() {
    // clause transitions take three literal tokens but only top and bot reach literals
    let sat = Formula { vars: 3, clauses: vec![[1, 2, 3]] };
    let net = gen_3sat_net(&sat).unwrap();
    assert!(sat.satisfiable());
    assert_eq!(find_slice_distribution(&net).unwrap(), None);
    assert!(!acyclic_distribution_exists(&net).unwrap());
    let unsat = Formula { vars: 1, clauses: vec![[1, 1, 1], [-1, -1, -1]] };
    assert!(!unsat.satisfiable());
    assert!(!acyclic_distribution_exists(&gen_3sat_net(&unsat).unwrap()).unwrap());
}

#[test]
fn gadget_sizes_follow_the_closed_form() {
    let mut r = rng(3);
    for n in 1..=6 {
        for m in 1..=6 {
            let net = gen_3sat_net(&random_formula(&mut r, n, m)).unwrap();
            assert_eq!(net.places().len(), 2 * n + 4 * m + 1);
            assert_eq!(net.transitions().len() + 3, n + 4 * m);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_sliceable_nets_are_recovered(seed in any::<u64>()) {
        let g = random_sliceable_game(&mut rng(seed));
        let net = g.net();
        let d = find_slice_distribution(net).unwrap();
        prop_assert!(d.is_some());
        let d = d.unwrap();
        prop_assert!(validate_slice_distribution(net, &d).is_empty());
        prop_assert_eq!(d.compose(net).unwrap().flow(), net.flow());
        let snd = d.to_snd(net).unwrap();
        prop_assert!(validate_snd(net, &snd).is_valid());
        for m in &snd.members {
            let places: BTreeSet<&String> = m.net.places().iter().map(|p| &m.pi[p]).collect();
            prop_assert_eq!(places.len(), m.net.places().len());
        }
    }

    #[test]
    fn built_snds_preserve_reachability(seed in any::<u64>()) {
        let net = random_cp_net(&mut rng(seed));
        let snd = build_snd(&net).unwrap();
        let rep = validate_snd(&net, &snd);
        // composition clauses hold on every net; member clauses can only fail
        // when a transition needs more tokens than the net has
        let widest = net.transitions().iter().map(|t| net.pre(t).total()).max().unwrap_or(0);
        for v in &rep.violations {
            prop_assert!(v.starts_with("member") && widest > net.initial().total(), "{}", v);
        }
        prop_assert_eq!(reach_image(&snd), reachable_markings(&net, Reach::fixpoint()).unwrap());
    }
}
