#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::path::PathBuf;

use gamebridge::cli::{parse_game_file, ControllerFile, GameFile, StrategyFile};
use gamebridge::distribution::Formula;
use gamebridge::games::{ControlGame, Controller, Memo, Objective, PetriGame, Recall, Strategy};
use gamebridge::nets::{NetBuilder, PetriNet};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn pg(name: &str) -> PetriGame {
    match parse_game_file(&fixture(name)).unwrap() {
        GameFile::PetriGame(g) => g,
        other => panic!("{name}: {other:?}"),
    }
}

pub fn cg(name: &str) -> ControlGame {
    match parse_game_file(&fixture(name)).unwrap() {
        GameFile::ControlGame(c) => c,
        other => panic!("{name}: {other:?}"),
    }
}

pub fn strategy_file(name: &str) -> StrategyFile {
    match parse_game_file(&fixture(name)).unwrap() {
        GameFile::Strategy(s) => s,
        other => panic!("{name}: {other:?}"),
    }
}

pub fn controller_file(name: &str) -> ControllerFile {
    match parse_game_file(&fixture(name)).unwrap() {
        GameFile::Controller(c) => c,
        other => panic!("{name}: {other:?}"),
    }
}

pub fn set<const N: usize>(xs: [&str; N]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn mix(seed: u64, parts: &[&str]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seed.hash(&mut h);
    for p in parts {
        p.hash(&mut h);
    }
    h.finish()
}

fn pick_subset(all: &BTreeSet<String>, bits: u64) -> BTreeSet<String> {
    all.iter()
        .enumerate()
        .filter(|(i, _)| bits >> (i % 64) & 1 == 1)
        .map(|(_, x)| x.clone())
        .collect()
}

/// A strategy deciding by a hash of `(place, memo)`.
pub fn hashed_strategy(g: &PetriGame, seed: u64, memory: usize) -> Strategy {
    let net = g.net().clone();
    Strategy::custom(Recall::Depth(memory), move |place, memo: &Memo| {
        let memo = serde_json::to_string(memo).unwrap();
        Ok(pick_subset(net.place_post(place), mix(seed, &[place, &memo])))
    })
}

/// A controller deciding by a hash of `(process, state, memo)`.
pub fn hashed_controller(c: &ControlGame, seed: u64, memory: usize) -> Controller {
    let c = c.clone();
    Controller::custom(Recall::Depth(memory), move |p, s, memo: &Memo| {
        let memo = serde_json::to_string(memo).unwrap();
        Ok(pick_subset(&c.controllable_at(p, s), mix(seed, &[p, s, &memo])))
    })
}

/// A reachability game of one or two sequential slices with two to four
/// places each, joined by synchronising transitions.
pub fn random_sliceable_game(r: &mut ChaCha8Rng) -> PetriGame {
    let slices = r.gen_range(1..=2);
    let mut b = NetBuilder::new();
    let mut places: Vec<Vec<String>> = Vec::new();
    for k in 0..slices {
        let n = r.gen_range(2..=4);
        let ps: Vec<String> = (0..n).map(|j| format!("{}{j}", ["p", "q"][k])).collect();
        b.places(ps.iter().cloned());
        b.mark(ps[0].clone());
        places.push(ps);
    }
    let mut count = 0;
    for (k, ps) in places.iter().enumerate() {
        for _ in 0..r.gen_range(1..=3) {
            let from = ps.choose(r).unwrap();
            let to = ps.choose(r).unwrap();
            b.transition(format!("t{k}_{count}"), &[from], &[to]);
            count += 1;
        }
    }
    if slices == 2 {
        for _ in 0..r.gen_range(1..=2) {
            let a = [places[0].choose(r).unwrap(), places[1].choose(r).unwrap()];
            let z = [places[0].choose(r).unwrap(), places[1].choose(r).unwrap()];
            b.transition(format!("sync{count}"), &a, &z);
            count += 1;
        }
    }
    let net = b.build().unwrap();
    let all: Vec<String> = net.places().iter().cloned().collect();
    let system: Vec<String> = all.iter().filter(|_| r.gen_bool(0.5)).cloned().collect();
    let special: Vec<String> = all.iter().filter(|_| r.gen_bool(0.3)).cloned().collect();
    PetriGame::new(net, system, special, Objective::Reachability).unwrap()
}

/// A concurrency-preserving net with at most eight places and three tokens.
pub fn random_cp_net(r: &mut ChaCha8Rng) -> PetriNet {
    let n = r.gen_range(2..=8);
    let ps: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
    let mut b = NetBuilder::new();
    b.places(ps.iter().cloned());
    for _ in 0..r.gen_range(1..=3) {
        b.mark(ps.choose(r).unwrap().clone());
    }
    for t in 0..r.gen_range(1..=5) {
        let k = r.gen_range(1..=2.min(n));
        let pre: Vec<&String> = ps.choose_multiple(r, k).collect();
        let post: Vec<&String> = ps.choose_multiple(r, k).collect();
        b.transition(format!("t{t}"), &pre, &post);
    }
    b.build().unwrap()
}

pub fn random_formula(r: &mut ChaCha8Rng, vars: usize, clauses: usize) -> Formula {
    let clauses = (0..clauses)
        .map(|_| {
            let mut c = [0i32; 3];
            for l in &mut c {
                let v = r.gen_range(1..=vars as i32);
                *l = if r.gen_bool(0.5) { v } else { -v };
            }
            c
        })
        .collect();
    Formula { vars, clauses }
}

/// A distributed alphabet over up to six actions and three processes.
pub fn random_alphabet(r: &mut ChaCha8Rng) -> BTreeMap<String, Vec<String>> {
    let procs = ["p", "q", "r"];
    let n = r.gen_range(1..=6);
    (0..n)
        .map(|i| {
            let k = r.gen_range(1..=procs.len());
            let dom = procs.choose_multiple(r, k).map(|p| p.to_string()).collect();
            (format!("{}", (b'a' + i as u8) as char), dom)
        })
        .collect()
}

pub fn random_word(r: &mut ChaCha8Rng, alpha: &BTreeMap<String, Vec<String>>, max: usize) -> Vec<String> {
    let acts: Vec<&String> = alpha.keys().collect();
    let len = r.gen_range(0..=max);
    (0..len).map(|_| (*acts.choose(r).unwrap()).clone()).collect()
}

/// An asynchronous automaton over a random alphabet; each process has up to
/// three states and a random deterministic edge set.
pub fn random_automaton(r: &mut ChaCha8Rng) -> gamebridge::automata::AsyncAutomaton {
    use gamebridge::automata::{compose_local, LocalProcess};
    use gamebridge::traces::DistributedAlphabet;
    let dom = random_alphabet(r);
    let alpha = std::sync::Arc::new(DistributedAlphabet::new(dom.clone()).unwrap().with_processes(["p", "q", "r"]));
    let mut procs = BTreeMap::new();
    for p in ["p", "q", "r"] {
        let mut lp = LocalProcess::new(format!("{p}0"));
        let n = r.gen_range(1..=3);
        for s in 0..n {
            lp.state(&format!("{p}{s}"));
            for (a, ds) in &dom {
                if ds.iter().any(|d| d == p) && r.gen_bool(0.6) {
                    lp.edge(&format!("{p}{s}"), a, &format!("{p}{}", r.gen_range(0..n)));
                }
            }
        }
        procs.insert(p.to_string(), lp);
    }
    compose_local(&procs, alpha).unwrap()
}

/// A control game on [`random_automaton`] with random controllable actions
/// and bad states.
pub fn random_control_game(r: &mut ChaCha8Rng, objective: Objective) -> ControlGame {
    let aut = random_automaton(r);
    let ctrl: Vec<String> = aut.alphabet().actions().filter(|_| r.gen_bool(0.5)).cloned().collect();
    let mut special = BTreeMap::new();
    for (p, ss) in aut.all_local_states() {
        let bad: BTreeSet<String> = ss.iter().filter(|s| !s.ends_with('0') && r.gen_bool(0.3)).cloned().collect();
        special.insert(p.clone(), bad);
    }
    ControlGame::new(aut, ctrl, special, objective).unwrap()
}
