mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use gamebridge::games::{
    check_deterministic, check_justified_refusal, controller_compatible_plays, controller_winning_bounded,
    explore_strategy, materialize, strategy_winning, Controller, Objective, PetriGame, Strategy, Verdict,
};
use gamebridge::nets::{is_final, NetBuilder};
use gamebridge::unfolding::{validate_branching_process, BranchingProcess};
use proptest::prelude::*;

#[test]
fn sample_strategy_wins_and_is_a_branching_process() {
    let g = pg("fig5.pg");
    let s = strategy_file("fig5.strategy").strategy;
    assert_eq!(strategy_winning(&g, &s, 10).unwrap(), Verdict::Winning);
    let mat = materialize(&g, &s, 8).unwrap();
    assert!(validate_branching_process(&mat.bp).is_valid());
    assert!(check_justified_refusal(&g, &mat.bp, 8).unwrap().passes());
}

#[test]
fn permissive_strategy_loses_sample_game() {
    let g = pg("fig5.pg");
    let v = strategy_winning(&g, &Strategy::allow_all(), 10).unwrap();
    assert!(matches!(v, Verdict::NotWinning(_)), "{v}");
    assert!(!check_deterministic(&g, &Strategy::allow_all(), 6).unwrap());
}

#[test]
fn environment_places_cannot_refuse() {
    let g = pg("fig5.pg");
    // only the initial conditions: e1 and e2 are missing below an environment place
    let occ = NetBuilder::new().places(["cA", "cC"]).mark("cA").mark("cC").build().unwrap();
    let lambda: BTreeMap<String, String> = [("cA", "A"), ("cC", "C")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let bp = BranchingProcess::from_parts(occ, lambda, Arc::new((**g.net()).clone()));
    let rep = check_justified_refusal(&g, &bp, 4).unwrap();
    assert!(!rep.passes());
    assert!(rep.violations.iter().any(|v| v.contains("e1")));
    assert!(!rep.violations.iter().any(|v| v.contains(" i ") || v.ends_with(" i")));
}

#[test]
fn fixture_controllers_win() {
    for name in ["fig7.controller", "fig14.controller"] {
        let f = controller_file(name);
        let (c, _) = gamebridge::cli::load_control(&f.game).unwrap();
        assert_eq!(controller_winning_bounded(&c, &f.controller, 16).unwrap(), Verdict::Winning, "{name}");
    }
}

#[test]
fn games_reject_unknown_names() {
    let net = NetBuilder::new().places(["A"]).mark("A").build().unwrap();
    assert!(PetriGame::new(net.clone(), ["B"], Vec::<String>::new(), Objective::Safety).is_err());
    assert!(PetriGame::new(net, ["A"], ["Z"], Objective::Safety).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compatible_plays_are_prefix_closed_and_monotone(seed in any::<u64>(), b in 0usize..4) {
        let mut r = rng(seed);
        let c = random_control_game(&mut r, Objective::Safety);
        let ctrl = hashed_controller(&c, seed, 1);
        let small = controller_compatible_plays(&c, &ctrl, b).unwrap();
        let large = controller_compatible_plays(&c, &ctrl, b + 1).unwrap();
        prop_assert!(small.is_subset(&large));
        let all = controller_compatible_plays(&c, &Controller::top(), b + 1).unwrap();
        prop_assert!(large.is_subset(&all));
        for t in &large {
            let w = t.word();
            for k in 0..w.len() {
                let pre = gamebridge::traces::normalize(c.alphabet(), &w[..k]).unwrap();
                prop_assert!(large.contains(&pre), "{} missing prefix {}", t, pre);
            }
        }
    }

    #[test]
    fn winning_verdicts_survive_a_rescan(seed in any::<u64>(), safety in any::<bool>()) {
        let mut r = rng(seed);
        let base = random_sliceable_game(&mut r);
        let objective = if safety { Objective::Safety } else { Objective::Reachability };
        let g = PetriGame::new((**base.net()).clone(), base.system().clone(), base.special().clone(), objective).unwrap();
        for s in [hashed_strategy(&g, seed, 1), Strategy::allow_all()] {
            if strategy_winning(&g, &s, 8).unwrap() != Verdict::Winning {
                continue;
            }
            let ex = explore_strategy(&g, &s, 8).unwrap();
            for (i, st) in ex.nodes.iter().enumerate() {
                let m = st.marking();
                if safety {
                    prop_assert!(!m.support().any(|p| g.is_special(p)));
                    if ex.edges[i].is_empty() {
                        prop_assert!(is_final(g.net(), &m));
                    }
                } else if ex.edges[i].is_empty() {
                    prop_assert!(m.support().all(|p| g.is_special(p)));
                }
            }
        }
    }
}
