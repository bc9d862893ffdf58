mod common;

use std::collections::BTreeMap;

use common::*;
use gamebridge::automata::{compose_local, plays_upto, step, AutomatonError, LocalProcess};
use gamebridge::traces::DistributedAlphabet;
use proptest::prelude::*;
use rand::Rng;

/// A random executable word of the automaton.
fn run_word(aut: &gamebridge::automata::AsyncAutomaton, r: &mut rand_chacha::ChaCha8Rng, len: usize) -> Vec<String> {
    let mut s = aut.initial_vec();
    let mut w = Vec::new();
    for _ in 0..len {
        let en = aut.enabled_vec(&s);
        if en.is_empty() {
            break;
        }
        let a = en[r.gen_range(0..en.len())].clone();
        s = aut.step_vec(&s, &a).unwrap();
        w.push(a);
    }
    w
}

#[test]
fn synchronising_step() {
    let dom: BTreeMap<&str, Vec<&str>> = [("a", vec!["p"]), ("c", vec!["p", "q"])].into();
    let alpha = std::sync::Arc::new(DistributedAlphabet::new(dom).unwrap());
    let mut p = LocalProcess::new("p0");
    p.edge("p0", "a", "p1").edge("p1", "c", "p0");
    let mut q = LocalProcess::new("q0");
    q.edge("q0", "c", "q1");
    let aut = compose_local(&[("p".to_string(), p), ("q".to_string(), q)].into(), alpha).unwrap();
    let g0 = aut.initial().clone();
    assert_eq!(step(&aut, &g0, "c"), Err(AutomatonError::NotDefined("c".into())));
    let g1 = step(&aut, &g0, "a").unwrap();
    let g2 = step(&aut, &g1, "c").unwrap();
    assert_eq!(g2, [("p".to_string(), "p0".to_string()), ("q".to_string(), "q1".to_string())].into());
    assert_eq!(step(&aut, &g0, "z"), Err(AutomatonError::UnknownAction("z".into())));
}

#[test]
fn local_edges_must_respect_the_alphabet() {
    let dom: BTreeMap<&str, Vec<&str>> = [("a", vec!["p"])].into();
    let alpha = std::sync::Arc::new(DistributedAlphabet::new(dom).unwrap().with_processes(["q"]));
    let mut q = LocalProcess::new("q0");
    q.edge("q0", "a", "q0");
    let err = compose_local(&[("q".to_string(), q)].into(), alpha).unwrap_err();
    assert!(matches!(err, AutomatonError::ActionOutsideAlphabet { .. }));
}

#[test]
fn fixture_plays_are_traces_of_the_automaton() {
    let c = cg("fig9.cg");
    let plays = plays_upto(c.automaton(), 4);
    assert!(plays.iter().any(|t| t.is_empty()));
    for t in &plays {
        assert!(c.automaton().run(t.word()).is_some(), "{t}");
    }
}

proptest! {
    #[test]
    fn equivalent_words_reach_the_same_state(seed in any::<u64>()) {
        let mut r = rng(seed);
        let aut = random_automaton(&mut r);
        let w = run_word(&aut, &mut r, 8);
        let end = aut.run(&w).unwrap();
        let mut v = w.clone();
        for _ in 0..12 {
            if v.len() > 1 {
                let i = r.gen_range(0..v.len() - 1);
                if aut.alphabet().independent(&v[i], &v[i + 1]) {
                    v.swap(i, i + 1);
                }
            }
        }
        prop_assert_eq!(aut.run(&v), Some(end));
    }

    #[test]
    fn plays_grow_with_the_bound(seed in any::<u64>(), b in 0usize..4) {
        let mut r = rng(seed);
        let aut = random_automaton(&mut r);
        let small = plays_upto(&aut, b);
        let large = plays_upto(&aut, b + 1);
        prop_assert!(small.is_subset(&large));
        for t in &large {
            prop_assert!(t.len() <= b + 1);
            prop_assert!(aut.run(t.word()).is_some());
        }
    }
}
