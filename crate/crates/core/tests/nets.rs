mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use common::*;
use gamebridge::distribution::{gen_3sat_net, Formula};
use gamebridge::nets::{fire, is_final, reachable_markings, validate_net, Marking, NetBuilder, NetError, PetriNet, Reach};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Arbitrary small net: up to four places and four transitions with unit arcs.
fn random_net(seed: u64) -> PetriNet {
    let mut r = rng(seed);
    let ps: Vec<String> = (0..r.gen_range(1..=4)).map(|i| format!("P{i}")).collect();
    let mut b = NetBuilder::new();
    b.places(ps.iter().cloned());
    for _ in 0..r.gen_range(1..=3) {
        b.mark(ps.choose(&mut r).unwrap().clone());
    }
    for t in 0..r.gen_range(0..=4) {
        let (i, o) = (r.gen_range(1..=2.min(ps.len())), r.gen_range(0..=2.min(ps.len())));
        let pre: Vec<&String> = ps.choose_multiple(&mut r, i).collect();
        let post: Vec<&String> = ps.choose_multiple(&mut r, o).collect();
        b.transition(format!("t{t}"), &pre, &post);
    }
    b.build().unwrap()
}

fn counts(m: &Marking) -> BTreeMap<String, i64> {
    m.iter().map(|(p, n)| (p.clone(), i64::from(*n))).collect()
}

#[test]
fn single_token_moves() {
    let net = NetBuilder::new().places(["A", "B"]).transition("t", &["A"], &["B"]).mark("A").build().unwrap();
    let m = fire(&net, net.initial(), "t").unwrap();
    assert_eq!(m, Marking::from_places(["B"]));
    assert_eq!(fire(&net, &m, "t"), Err(NetError::NotEnabled("t".into())));
    assert_eq!(fire(&net, &m, "u"), Err(NetError::UnknownTransition("u".into())));
}

#[test]
fn burglary_crime_boss_moves_up() {
    let g = pg("burglary.pg");
    let net = g.net();
    let t = net.transitions().iter().find(|t| t.starts_with('u')).unwrap().clone();
    let m = fire(net, net.initial(), &t).unwrap();
    assert_eq!(m.total(), net.initial().total());
    assert_eq!(m.minus(net.post(&t)).unwrap(), net.initial().minus(net.pre(&t)).unwrap());
}

#[test]
fn no_transitions_reach_only_initial() {
    let net = NetBuilder::new().places(["A"]).mark("A").build().unwrap();
    let r = reachable_markings(&net, Reach::fixpoint()).unwrap();
    assert_eq!(r, BTreeSet::from([net.initial().clone()]));
}

#[test]
fn sample_fixpoint_matches_bfs() {
    let g = pg("fig5.pg");
    let net = g.net();
    let mut seen = BTreeSet::from([net.initial().clone()]);
    let mut queue = VecDeque::from([(net.initial().clone(), 0)]);
    while let Some((m, d)) = queue.pop_front() {
        if d == 20 {
            continue;
        }
        for t in net.transitions() {
            if let Ok(n) = fire(net, &m, t) {
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    assert_eq!(reachable_markings(net, Reach::fixpoint()).unwrap(), seen);
}

#[test]
fn gadget_reachability_terminates() {
    let f = Formula { vars: 1, clauses: vec![[1, 1, 1]] };
    let net = gen_3sat_net(&f).unwrap();
    let r = reachable_markings(&net, Reach::fixpoint()).unwrap();
    assert!(r.contains(net.initial()));
    assert!(r.len() < 10);
}

#[test]
fn state_cap_is_reported() {
    let net = NetBuilder::new().places(["A", "B"]).transition("t", &["A"], &["A", "B"]).mark("A").build().unwrap();
    assert_eq!(reachable_markings(&net, Reach::Fixpoint { cap: 50 }), Err(NetError::BoundExceeded(50)));
    assert_eq!(reachable_markings(&net, Reach::Bounded(3)).unwrap().len(), 4);
}

#[test]
fn final_markings() {
    let g = pg("fig5.pg");
    assert!(is_final(g.net(), &Marking::new()));
    let c = cg("fig9.cg");
    let res = gamebridge::translate::cg_to_pg(&c, gamebridge::translate::CgVariant::Base).unwrap();
    let m = Marking::from_places(["(C,{})", "(E,{})"]);
    assert!(is_final(res.petri_game.net(), &m));
}

#[test]
fn validation_reports() {
    let g = pg("fig5.pg");
    let r = validate_net(g.net());
    assert_eq!(r.one_bounded, Some(true));
    assert!(r.concurrency_preserving);
    let split = NetBuilder::new().places(["A", "B", "C"]).transition("t", &["A"], &["B", "C"]).mark("A").build().unwrap();
    assert!(!validate_net(&split).concurrency_preserving);
    let two = NetBuilder::new().places(["A", "B"]).transition("t", &["A"], &["B"]).tokens("A", 2).build().unwrap();
    let r = validate_net(&two);
    assert!(r.concurrency_preserving);
    assert_eq!(r.one_bounded, Some(false));
}

#[test]
fn duplicate_and_dangling_ids_rejected() {
    assert!(NetBuilder::new().places(["A", "A"]).build().is_err());
    assert!(NetBuilder::new().places(["A"]).transition("A", &["A"], &["A"]).build().is_err());
    assert!(NetBuilder::new().places(["A"]).transition("t", &["B"], &["A"]).build().is_err());
}

proptest! {
    #[test]
    fn fire_matches_multiset_arithmetic(seed in any::<u64>(), picks in proptest::collection::vec(0usize..8, 0..12)) {
        let net = random_net(seed);
        let ts: Vec<&String> = net.transitions().iter().collect();
        let mut m = net.initial().clone();
        for k in picks {
            let Some(t) = ts.get(k % ts.len().max(1)) else { break };
            let mut oracle = counts(&m);
            for (p, n) in net.pre(t).iter() {
                *oracle.entry(p.clone()).or_default() -= i64::from(*n);
            }
            let enabled = oracle.values().all(|n| *n >= 0);
            match fire(&net, &m, t) {
                Ok(next) => {
                    prop_assert!(enabled);
                    for (p, n) in net.post(t).iter() {
                        *oracle.entry(p.clone()).or_default() += i64::from(*n);
                    }
                    oracle.retain(|_, n| *n != 0);
                    prop_assert_eq!(counts(&next), oracle);
                    m = next;
                }
                Err(e) => {
                    prop_assert!(!enabled);
                    prop_assert_eq!(e, NetError::NotEnabled((*t).clone()));
                }
            }
        }
    }

    #[test]
    fn fixpoint_is_closed_and_conserves_tokens(seed in any::<u64>()) {
        let net = random_net(seed);
        let Ok(reach) = reachable_markings(&net, Reach::Fixpoint { cap: 2000 }) else { return Ok(()) };
        prop_assert!(reach.contains(net.initial()));
        for m in &reach {
            for t in net.enabled(m) {
                let n = fire(&net, m, t).unwrap();
                prop_assert!(reach.contains(&n));
                if net.is_concurrency_preserving() {
                    prop_assert_eq!(n.total(), m.total());
                }
            }
        }
    }

    #[test]
    fn is_final_agrees_with_scan(seed in any::<u64>()) {
        let net = random_net(seed);
        for m in reachable_markings(&net, Reach::Bounded(4)).unwrap() {
            let scan = net.transitions().iter().any(|t| m.covers(net.pre(t)));
            prop_assert_eq!(is_final(&net, &m), !scan);
        }
    }

    #[test]
    fn bounded_reach_grows_with_bound(seed in any::<u64>(), b in 0usize..5) {
        let net = random_net(seed);
        let small = reachable_markings(&net, Reach::Bounded(b)).unwrap();
        let large = reachable_markings(&net, Reach::Bounded(b + 1)).unwrap();
        prop_assert!(small.is_subset(&large));
    }
}
