mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use gamebridge::traces::{local_view, normalize, poset_of, view_word, DistributedAlphabet, LabelledPoset, Trace, TraceError};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn sample(seed: u64) -> (Arc<DistributedAlphabet>, Vec<String>) {
    let mut r = rng(seed);
    let dom = random_alphabet(&mut r);
    let w = random_word(&mut r, &dom, 8);
    (Arc::new(DistributedAlphabet::new(dom).unwrap()), w)
}

fn two_procs() -> Arc<DistributedAlphabet> {
    let dom: BTreeMap<&str, Vec<&str>> = [("a", vec!["p"]), ("b", vec!["q"]), ("c", vec!["p", "q"])].into();
    Arc::new(DistributedAlphabet::new(dom).unwrap())
}

#[test]
fn independent_letters_commute() {
    let al = two_procs();
    assert_eq!(normalize(&al, &["b", "a"]).unwrap(), normalize(&al, &["a", "b"]).unwrap());
    assert_ne!(normalize(&al, &["a", "c"]).unwrap(), normalize(&al, &["c", "a"]).unwrap());
    assert_eq!(normalize(&al, &["b", "a", "c"]).unwrap().word(), ["a", "b", "c"]);
}

#[test]
fn unknown_actions_and_empty_domains_rejected() {
    let al = two_procs();
    assert_eq!(normalize(&al, &["z"]).unwrap_err(), TraceError::UnknownAction("z".into()));
    let bad: BTreeMap<&str, Vec<&str>> = [("a", vec![])].into();
    assert!(DistributedAlphabet::new(bad).is_err());
}

#[test]
fn view_drops_concurrent_suffix() {
    let al = two_procs();
    let t = normalize(&al, &["a", "c", "b", "a"]).unwrap();
    assert_eq!(local_view(&t, "q").word(), ["a", "c", "b"]);
    assert_eq!(local_view(&t, "p").word(), ["a", "c", "a"]);
    assert!(local_view(&Trace::empty(&al), "p").is_empty());
}

#[test]
fn prime_traces_end_in_one_action() {
    let al = two_procs();
    let t = normalize(&al, &["a", "b", "c"]).unwrap();
    assert!(t.is_prime());
    assert_eq!(t.last().as_deref(), Some("c"));
    assert!(!normalize(&al, &["a", "b"]).unwrap().is_prime());
}

fn shuffle_linearization(p: &LabelledPoset, seed: u64) -> Vec<String> {
    // a random topological order of the poset
    let mut r = rng(seed);
    let mut left: Vec<usize> = (0..p.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let ready: Vec<usize> = left.iter().copied().filter(|&j| !left.iter().any(|&i| p.less(i, j))).collect();
        let pick = *ready.choose(&mut r).unwrap();
        left.retain(|&x| x != pick);
        out.push(p.labels[pick].clone());
    }
    out
}

proptest! {
    #[test]
    fn poset_linearizations_normalize_back(seed in any::<u64>(), order in any::<u64>()) {
        let (al, w) = sample(seed);
        let t = normalize(&al, &w).unwrap();
        let p = poset_of(&t);
        prop_assert_eq!(&p.to_trace(), &t);
        if !w.is_empty() {
            let lin = shuffle_linearization(&p, order);
            prop_assert_eq!(normalize(&al, &lin).unwrap(), t.clone());
        }
    }

    #[test]
    fn views_are_idempotent_prefixes(seed in any::<u64>()) {
        let (al, w) = sample(seed);
        let t = normalize(&al, &w).unwrap();
        for p in al.processes() {
            let v = local_view(&t, p);
            prop_assert_eq!(local_view(&v, p), v.clone());
            prop_assert!(v.is_prefix_of(&t));
            prop_assert_eq!(normalize(&al, &view_word(&al, &w, p)).unwrap(), v);
        }
    }

    #[test]
    fn prime_last_is_stable(seed in any::<u64>(), order in any::<u64>()) {
        let (al, w) = sample(seed);
        let t = normalize(&al, &w).unwrap();
        if t.is_prime() {
            let p = poset_of(&t);
            let lin = shuffle_linearization(&p, order);
            prop_assert_eq!(lin.last().cloned(), t.last());
        }
    }

    #[test]
    fn concatenation_respects_prefix_order(seed in any::<u64>(), cut in 0usize..9) {
        let (al, w) = sample(seed);
        let k = cut.min(w.len());
        let u = normalize(&al, &w[..k]).unwrap();
        let v = normalize(&al, &w[k..]).unwrap();
        let t = normalize(&al, &w).unwrap();
        prop_assert_eq!(u.concat(&v), t.clone());
        prop_assert!(u.is_prefix_of(&t));
        prop_assert_eq!(u.lub(&t), t);
    }

    #[test]
    fn random_swaps_keep_the_trace(seed in any::<u64>()) {
        let (al, mut w) = sample(seed);
        let t = normalize(&al, &w).unwrap();
        let mut r = rng(seed ^ 1);
        for _ in 0..10 {
            if w.len() > 1 {
                let i = r.gen_range(0..w.len() - 1);
                if al.independent(&w[i], &w[i + 1]) {
                    w.swap(i, i + 1);
                }
            }
        }
        prop_assert_eq!(normalize(&al, &w).unwrap(), t);
    }
}
