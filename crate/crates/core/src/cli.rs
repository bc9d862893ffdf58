//! Text formats, DOT export and the `gb` command line.
//!
//! Every file is line oriented: `kind <k>` first, then keyword lines whose
//! tokens are separated by whitespace, with `:` and `->` as standalone
//! separators. `#` starts a comment. Emitted files are canonical, so
//! parsing and re-emitting reproduces them byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::automata::{AsyncAutomaton, AutomatonError};
use crate::distribution::{
    build_snd, communication_graph, find_slice_distribution, gen_3sat_net, validate_snd, DistError,
    Formula, SingularNet, SingularNetDistribution, Slice, SliceDistribution,
};
use crate::games::{
    controller_winning_bounded, strategy_winning, ControlGame, Controller, ControllerRule,
    Fallback, GameError, Memo, Objective, PetriGame, Recall, Strategy, StrategyRule, Verdict,
};
use crate::nets::{validate_net, NetBuilder, NetError, PetriNet};
use crate::traces::{normalize, DistributedAlphabet, TraceError};
use crate::translate::{
    auto_distribution, cg_to_pg, gen_lower_bound_cg, gen_lower_bound_pg, pg_to_cg, CgToPgResult,
    CgVariant, PgToCgResult, PgVariant, TranslateError,
};
use crate::unfolding::place_alphabet;
use crate::verify::{solve_cg, solve_pg, weak_bisim_check, ActionMap, BisimVerdict};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation failed ({clause}): {detail}")]
    Validation { clause: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Verify(#[from] crate::verify::VerifyError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

type Result<T> = std::result::Result<T, CliError>;

/// The game a strategy or controller file is played on.
#[derive(Debug, Clone)]
pub enum GameRef {
    Petri(PathBuf),
    Control(PathBuf),
    Pg2Cg(PathBuf, PgVariant),
    Cg2Pg(PathBuf, CgVariant),
}

impl GameRef {
    fn render(&self, base: &Path) -> String {
        let rel = |p: &PathBuf| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        match self {
            GameRef::Petri(p) | GameRef::Control(p) => rel(p),
            GameRef::Pg2Cg(p, v) => format!("{} pg2cg {v}", rel(p)),
            GameRef::Cg2Pg(p, v) => format!("{} cg2pg {v}", rel(p)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrategyFile {
    pub game: GameRef,
    pub strategy: Strategy,
}

#[derive(Debug, Clone)]
pub struct ControllerFile {
    pub game: GameRef,
    pub controller: Controller,
}

#[derive(Debug, Clone)]
pub enum GameFile {
    PetriGame(PetriGame),
    ControlGame(ControlGame),
    Strategy(StrategyFile),
    Controller(ControllerFile),
    Slices(SliceDistribution),
    Snd(SingularNetDistribution),
}

struct Line<'a> {
    no: usize,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Line<'a> {
    fn err(&self, i: usize, msg: impl Into<String>) -> CliError {
        let column = self.tokens.get(i).or(self.tokens.last()).map_or(1, |t| t.0);
        CliError::Parse {
            line: self.no,
            column,
            message: msg.into(),
        }
    }

    fn word(&self, i: usize) -> Result<&'a str> {
        self.tokens
            .get(i)
            .map(|t| t.1)
            .ok_or_else(|| self.err(i, "missing token"))
    }

    fn rest(&self, i: usize) -> Vec<&'a str> {
        self.tokens.iter().skip(i).map(|t| t.1).collect()
    }

    /// Splits the tokens after `skip` at standalone `sep` tokens.
    fn parts(&self, skip: usize, sep: &str) -> Vec<Vec<&'a str>> {
        let mut out = vec![Vec::new()];
        for (_, t) in self.tokens.iter().skip(skip) {
            if *t == sep {
                out.push(Vec::new());
            } else {
                out.last_mut().unwrap().push(*t);
            }
        }
        out
    }
}

fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, ch) in body.char_indices().chain([(body.len(), ' ')]) {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push((body[..s].chars().count() + 1, &body[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if !tokens.is_empty() {
            out.push(Line { no: no + 1, tokens });
        }
    }
    out
}

fn empty_word(w: &[&str]) -> Vec<String> {
    w.iter().filter(|x| **x != "ε").map(|x| x.to_string()).collect()
}

pub fn parse_game_file(path: &Path) -> Result<GameFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses file contents; game references resolve against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<GameFile> {
    let ls = lines(text);
    let Some(first) = ls.first() else {
        return Err(CliError::Parse {
            line: 1,
            column: 1,
            message: "empty file".into(),
        });
    };
    if first.word(0)? != "kind" {
        return Err(first.err(0, "expected `kind`"));
    }
    let body = &ls[1..];
    match first.word(1)? {
        "petri_game" => parse_pg(body).map(GameFile::PetriGame),
        "control_game" => parse_cg(body).map(GameFile::ControlGame),
        "strategy" => parse_strategy(body, base).map(GameFile::Strategy),
        "controller" => parse_controller(body, base).map(GameFile::Controller),
        "slices" => parse_slices(body).map(GameFile::Slices),
        "snd" => parse_snd(body).map(GameFile::Snd),
        k => Err(first.err(1, format!("unknown kind {k:?}"))),
    }
}

fn parse_objective(l: &Line) -> Result<Objective> {
    match l.word(1)? {
        "reachability" => Ok(Objective::Reachability),
        "safety" => Ok(Objective::Safety),
        o => Err(l.err(1, format!("unknown objective {o:?}"))),
    }
}

fn parse_pg(body: &[Line]) -> Result<PetriGame> {
    let mut b = NetBuilder::new();
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let mut flows: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
    let mut system = Vec::new();
    let mut special = Vec::new();
    let mut objective = None;
    for l in body {
        match l.word(0)? {
            "places" => {
                b.places(l.rest(1));
            }
            "transitions" => declared.extend(l.rest(1).into_iter().map(String::from)),
            "flow" => {
                let parts = l.parts(1, ":");
                if parts.len() != 2 || parts[0].len() != 1 {
                    return Err(l.err(1, "expected `flow t : pre -> post`"));
                }
                let io = l.parts(3, "->");
                if io.len() != 2 {
                    return Err(l.err(3, "expected `->`"));
                }
                let t = parts[0][0].to_string();
                if !declared.contains(&t) {
                    return Err(l.err(1, format!("undeclared transition {t:?}")));
                }
                if flows.contains_key(&t) {
                    return Err(l.err(1, format!("second flow for {t:?}")));
                }
                let f = |v: &Vec<&str>| v.iter().map(|x| x.to_string()).collect();
                flows.insert(t, (f(&io[0]), f(&io[1])));
            }
            "init" => {
                for p in l.rest(1) {
                    b.mark(p);
                }
            }
            "system" => system.extend(l.rest(1).into_iter().map(String::from)),
            "special" => special.extend(l.rest(1).into_iter().map(String::from)),
            "objective" => objective = Some(parse_objective(l)?),
            w => return Err(l.err(0, format!("unknown section {w:?}"))),
        }
    }
    for t in &declared {
        let (pre, post) = flows.remove(t).unwrap_or_default();
        b.transition(t.clone(), &pre, &post);
    }
    let net = b.build().map_err(|e| CliError::Validation {
        clause: "net".into(),
        detail: e.to_string(),
    })?;
    let objective = objective.ok_or_else(|| CliError::Validation {
        clause: "objective".into(),
        detail: "missing objective".into(),
    })?;
    PetriGame::new(net, system, special, objective).map_err(|e| CliError::Validation {
        clause: "game".into(),
        detail: e.to_string(),
    })
}

pub fn emit_petri_game(g: &PetriGame) -> String {
    let net = g.net();
    let mut s = String::from("kind petri_game\n");
    let join = |it: &mut dyn Iterator<Item = &String>| it.map(String::as_str).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "places {}", join(&mut net.places().iter()));
    let _ = writeln!(s, "transitions {}", join(&mut net.transitions().iter()));
    for t in net.transitions() {
        let _ = writeln!(
            s,
            "flow {t} : {} -> {}",
            net.pre(t).tokens().join(" "),
            net.post(t).tokens().join(" ")
        );
    }
    let _ = writeln!(s, "init {}", net.initial().tokens().join(" "));
    let _ = writeln!(s, "system {}", join(&mut g.system().iter()));
    let _ = writeln!(s, "special {}", join(&mut g.special().iter()));
    let _ = writeln!(s, "objective {}", g.objective());
    tidy(s)
}

/// Drops trailing spaces left by empty lists.
fn tidy(s: String) -> String {
    s.lines().map(|l| l.trim_end().to_string() + "\n").collect()
}

fn parse_cg(body: &[Line]) -> Result<ControlGame> {
    let mut states: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut initial = BTreeMap::new();
    let mut dom: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut delta: BTreeMap<String, BTreeMap<Vec<String>, Vec<String>>> = BTreeMap::new();
    let mut controllable = BTreeSet::new();
    let mut special: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut objective = None;
    let mut processes = Vec::new();
    for l in body {
        let colon = |l: &Line| -> Result<(String, Vec<String>)> {
            let parts = l.parts(1, ":");
            if parts.len() != 2 || parts[0].len() != 1 {
                return Err(l.err(1, "expected `<name> : ...`"));
            }
            Ok((parts[0][0].to_string(), parts[1].iter().map(|x| x.to_string()).collect()))
        };
        match l.word(0)? {
            "processes" => processes.extend(l.rest(1).into_iter().map(String::from)),
            "states" => {
                let (p, ss) = colon(l)?;
                states.entry(p).or_default().extend(ss);
            }
            "init" => {
                let (p, ss) = colon(l)?;
                if ss.len() != 1 {
                    return Err(l.err(3, "expected one initial state"));
                }
                initial.insert(p, ss[0].clone());
            }
            "dom" => {
                let (a, ps) = colon(l)?;
                dom.insert(a, ps);
            }
            "delta" => {
                let (a, rest) = colon(l)?;
                let io = l.parts(3, "->");
                if io.len() != 2 {
                    return Err(l.err(3, "expected `delta a : from.. -> to..`"));
                }
                let _ = rest;
                delta.entry(a).or_default().insert(
                    io[0].iter().map(|x| x.to_string()).collect(),
                    io[1].iter().map(|x| x.to_string()).collect(),
                );
            }
            "controllable" => controllable.extend(l.rest(1).into_iter().map(String::from)),
            "special" => {
                let (p, ss) = colon(l)?;
                special.entry(p).or_default().extend(ss);
            }
            "objective" => objective = Some(parse_objective(l)?),
            w => return Err(l.err(0, format!("unknown section {w:?}"))),
        }
    }
    let bad = |clause: &str, detail: String| CliError::Validation {
        clause: clause.into(),
        detail,
    };
    let alpha = DistributedAlphabet::new(dom.clone()).map_err(|e| bad("alphabet", e.to_string()))?;
    let alpha = Arc::new(alpha.with_processes(processes.iter().cloned()));
    for p in &processes {
        states.entry(p.clone()).or_default();
    }
    let aut = AsyncAutomaton::new(alpha, states, initial, delta).map_err(|e| bad("automaton", e.to_string()))?;
    let objective = objective.ok_or_else(|| bad("objective", "missing objective".into()))?;
    ControlGame::new(aut, controllable, special, objective).map_err(|e| bad("game", e.to_string()))
}

pub fn emit_control_game(c: &ControlGame) -> String {
    let aut = c.automaton();
    let mut s = String::from("kind control_game\n");
    let _ = writeln!(s, "processes {}", aut.processes().join(" "));
    for p in aut.processes() {
        let ss: Vec<&str> = aut.local_states(p).iter().map(String::as_str).collect();
        let _ = writeln!(s, "states {p} : {}", ss.join(" "));
    }
    for p in aut.processes() {
        let _ = writeln!(s, "init {p} : {}", aut.initial()[p]);
    }
    for a in c.alphabet().actions() {
        let d: Vec<&str> = c.alphabet().dom(a).unwrap().iter().map(String::as_str).collect();
        let _ = writeln!(s, "dom {a} : {}", d.join(" "));
    }
    for (a, entries) in aut.delta() {
        for (from, to) in entries {
            let _ = writeln!(s, "delta {a} : {} -> {}", from.join(" "), to.join(" "));
        }
    }
    let ctrl: Vec<&str> = c.controllable().iter().map(String::as_str).collect();
    let _ = writeln!(s, "controllable {}", ctrl.join(" "));
    for (p, ss) in c.special() {
        if !ss.is_empty() {
            let v: Vec<&str> = ss.iter().map(String::as_str).collect();
            let _ = writeln!(s, "special {p} : {}", v.join(" "));
        }
    }
    let _ = writeln!(s, "objective {}", c.objective());
    tidy(s)
}

fn parse_game_ref(l: &Line, base: &Path) -> Result<GameRef> {
    let path = base.join(l.word(1)?);
    match l.tokens.len() {
        2 => {
            let is_pg = path.extension().is_some_and(|e| e == "pg");
            Ok(if is_pg { GameRef::Petri(path) } else { GameRef::Control(path) })
        }
        4 => {
            let v = l.word(3)?;
            match l.word(2)? {
                "pg2cg" => Ok(GameRef::Pg2Cg(path, v.parse().map_err(|e: String| l.err(3, e))?)),
                "cg2pg" => Ok(GameRef::Cg2Pg(path, v.parse().map_err(|e: String| l.err(3, e))?)),
                d => Err(l.err(2, format!("unknown direction {d:?}"))),
            }
        }
        _ => Err(l.err(1, "expected `game <file> [pg2cg|cg2pg <variant>]`")),
    }
}

/// The Petri game behind a reference, with the translation result when
/// the game is translated.
pub fn load_petri(r: &GameRef) -> Result<(PetriGame, Option<CgToPgResult>)> {
    match r {
        GameRef::Petri(p) => match parse_game_file(p)? {
            GameFile::PetriGame(g) => Ok((g, None)),
            _ => Err(CliError::Usage(format!("{} is not a Petri game", p.display()))),
        },
        GameRef::Cg2Pg(p, v) => match parse_game_file(p)? {
            GameFile::ControlGame(c) => {
                let res = cg_to_pg(&c, *v)?;
                Ok((res.petri_game.clone(), Some(res)))
            }
            _ => Err(CliError::Usage(format!("{} is not a control game", p.display()))),
        },
        _ => Err(CliError::Usage("strategies need a Petri game".into())),
    }
}

pub fn load_control(r: &GameRef) -> Result<(ControlGame, Option<PgToCgResult>)> {
    match r {
        GameRef::Control(p) => match parse_game_file(p)? {
            GameFile::ControlGame(c) => Ok((c, None)),
            _ => Err(CliError::Usage(format!("{} is not a control game", p.display()))),
        },
        GameRef::Pg2Cg(p, v) => match parse_game_file(p)? {
            GameFile::PetriGame(g) => {
                let res = pg_to_cg(&g, &auto_distribution(&g)?, *v)?;
                Ok((res.control_game.clone(), Some(res)))
            }
            _ => Err(CliError::Usage(format!("{} is not a Petri game", p.display()))),
        },
        _ => Err(CliError::Usage("controllers need a control game".into())),
    }
}

fn parse_recall_fallback(
    body: &[Line],
    base: &Path,
) -> Result<(GameRef, Option<usize>, Fallback, Vec<usize>)> {
    let mut game = None;
    let mut depth = None;
    let mut fallback = Fallback::Nothing;
    let mut decides = Vec::new();
    for (i, l) in body.iter().enumerate() {
        match l.word(0)? {
            "game" => game = Some(parse_game_ref(l, base)?),
            "recall" => match l.word(1)? {
                "full" => depth = None,
                "depth" => {
                    depth = Some(l.word(2)?.parse().map_err(|_| l.err(2, "expected a number"))?)
                }
                r => return Err(l.err(1, format!("unknown recall {r:?}"))),
            },
            "fallback" => {
                fallback = match l.word(1)? {
                    "nothing" => Fallback::Nothing,
                    "everything" => Fallback::Everything,
                    f => return Err(l.err(1, format!("unknown fallback {f:?}"))),
                }
            }
            "decide" => decides.push(i),
            w => return Err(l.err(0, format!("unknown section {w:?}"))),
        }
    }
    let game = game.ok_or_else(|| CliError::Validation {
        clause: "game".into(),
        detail: "missing game line".into(),
    })?;
    Ok((game, depth, fallback, decides))
}

fn parse_memo(l: &Line, i: usize, tok: &[&str]) -> Result<Memo> {
    let [t] = tok else {
        return Err(l.err(i, "expected one memo token"));
    };
    serde_json::from_str(t).map_err(|e| l.err(i, format!("bad memo: {e}")))
}

fn parse_strategy(body: &[Line], base: &Path) -> Result<StrategyFile> {
    let (game, depth, fallback, decides) = parse_recall_fallback(body, base)?;
    let (g, _) = load_petri(&game)?;
    let recall = match depth {
        None => Recall::Full(place_alphabet(g.net())),
        Some(k) => Recall::Depth(k),
    };
    let mut s = Strategy::table(recall, fallback);
    for &i in &decides {
        let l = &body[i];
        let parts = l.parts(1, ":");
        if parts.len() != 3 || parts[0].len() != 1 {
            return Err(l.err(1, "expected `decide place : memo : allowed..`"));
        }
        let memo = match depth {
            None => {
                let t = normalize(&place_alphabet(g.net()), &empty_word(&parts[1]))
                    .map_err(|e| l.err(3, e.to_string()))?;
                Memo::Word(t.word().to_vec())
            }
            Some(_) => parse_memo(l, 3, &parts[1])?,
        };
        s.insert(parts[0][0], memo, parts[2].iter().copied());
    }
    Ok(StrategyFile { game, strategy: s })
}

fn parse_controller(body: &[Line], base: &Path) -> Result<ControllerFile> {
    let (game, depth, fallback, decides) = parse_recall_fallback(body, base)?;
    let (c, _) = load_control(&game)?;
    let recall = match depth {
        None => Recall::Full(c.alphabet().clone()),
        Some(k) => Recall::Depth(k),
    };
    let mut ctrl = Controller::table(recall, fallback);
    for &i in &decides {
        let l = &body[i];
        let parts = l.parts(1, ":");
        if parts.len() != 3 {
            return Err(l.err(1, "expected `decide process [state] : memo : allowed..`"));
        }
        match (depth, parts[0].as_slice()) {
            (None, [p]) => ctrl
                .insert_view(&c, p, &empty_word(&parts[1]), parts[2].iter().copied())
                .map_err(|e| l.err(3, e.to_string()))?,
            (Some(_), [p, s]) => {
                let memo = parse_memo(l, 4, &parts[1])?;
                ctrl.insert(p, s, memo, parts[2].iter().copied());
            }
            _ => return Err(l.err(1, "full recall takes a process, depth recall a process and state")),
        }
    }
    Ok(ControllerFile { game, controller: ctrl })
}

pub fn emit_strategy(f: &StrategyFile, base: &Path) -> Result<String> {
    let mut s = String::from("kind strategy\n");
    let _ = writeln!(s, "game {}", f.game.render(base));
    emit_table_header(&mut s, &f.strategy.recall)?;
    let StrategyRule::Table { entries, fallback } = &f.strategy.rule else {
        return Err(CliError::Usage("only table strategies can be written".into()));
    };
    emit_fallback(&mut s, *fallback);
    for ((p, m), a) in entries {
        let _ = writeln!(s, "decide {p} : {} : {}", render_memo(m), join_set(a));
    }
    Ok(tidy(s))
}

pub fn emit_controller(f: &ControllerFile, base: &Path) -> Result<String> {
    let mut s = String::from("kind controller\n");
    let _ = writeln!(s, "game {}", f.game.render(base));
    emit_table_header(&mut s, &f.controller.recall)?;
    let ControllerRule::Table { entries, fallback } = &f.controller.rule else {
        return Err(CliError::Usage("only table controllers can be written".into()));
    };
    emit_fallback(&mut s, *fallback);
    for ((p, st, m), a) in entries {
        let head = match m {
            Memo::Word(_) => p.clone(),
            Memo::Term(_) => format!("{p} {st}"),
        };
        let _ = writeln!(s, "decide {head} : {} : {}", render_memo(m), join_set(a));
    }
    Ok(tidy(s))
}

fn emit_table_header(s: &mut String, r: &Recall) -> Result<()> {
    match r {
        Recall::Full(_) => s.push_str("recall full\n"),
        Recall::Depth(k) => {
            let _ = writeln!(s, "recall depth {k}");
        }
        Recall::Custom(_) => return Err(CliError::Usage("custom recall cannot be written".into())),
    }
    Ok(())
}

fn emit_fallback(s: &mut String, f: Fallback) {
    s.push_str(match f {
        Fallback::Nothing => "fallback nothing\n",
        Fallback::Everything => "fallback everything\n",
    });
}

fn render_memo(m: &Memo) -> String {
    match m {
        Memo::Word(w) if w.is_empty() => "ε".to_string(),
        Memo::Word(w) => w.join(" "),
        Memo::Term(_) => serde_json::to_string(m).expect("memos serialize"),
    }
}

fn join_set(a: &BTreeSet<String>) -> String {
    a.iter().map(String::as_str).collect::<Vec<_>>().join(" ")
}

fn parse_slices(body: &[Line]) -> Result<SliceDistribution> {
    let mut slices = Vec::new();
    for l in body {
        if l.word(0)? != "slice" {
            return Err(l.err(0, "expected `slice`"));
        }
        let parts = l.parts(1, ":");
        if parts.len() != 3 || parts[0].len() != 1 {
            return Err(l.err(1, "expected `slice initial : places : transitions`"));
        }
        let set = |v: &Vec<&str>| v.iter().map(|x| x.to_string()).collect();
        slices.push(Slice {
            initial: parts[0][0].to_string(),
            places: set(&parts[1]),
            transitions: set(&parts[2]),
        });
    }
    Ok(SliceDistribution { slices })
}

pub fn emit_slices(d: &SliceDistribution) -> String {
    let mut s = String::from("kind slices\n");
    for sl in &d.slices {
        let _ = writeln!(s, "slice {} : {} : {}", sl.initial, join_set(&sl.places), join_set(&sl.transitions));
    }
    tidy(s)
}

fn parse_snd(body: &[Line]) -> Result<SingularNetDistribution> {
    struct Acc {
        b: NetBuilder,
        pi: BTreeMap<String, String>,
    }
    let mut members: Vec<Acc> = Vec::new();
    for l in body {
        let word = l.word(0)?;
        if word == "member" {
            members.push(Acc {
                b: NetBuilder::new(),
                pi: BTreeMap::new(),
            });
            continue;
        }
        let Some(m) = members.last_mut() else {
            return Err(l.err(0, "expected `member` first"));
        };
        match word {
            "place" => {
                let parts = l.parts(1, ":");
                if parts.len() != 2 || parts[0].len() != 1 || parts[1].len() != 1 {
                    return Err(l.err(1, "expected `place id : label`"));
                }
                m.b.place(parts[0][0]);
                m.pi.insert(parts[0][0].to_string(), parts[1][0].to_string());
            }
            "transition" => {
                let parts = l.parts(1, ":");
                if parts.len() != 3 || parts[0].len() != 1 || parts[1].len() != 1 {
                    return Err(l.err(1, "expected `transition id : label : pre -> post`"));
                }
                let io = l.parts(5, "->");
                if io.len() != 2 {
                    return Err(l.err(5, "expected `->`"));
                }
                m.b.transition(parts[0][0], &io[0], &io[1]);
                m.pi.insert(parts[0][0].to_string(), parts[1][0].to_string());
            }
            "init" => {
                for p in l.rest(1) {
                    m.b.mark(p);
                }
            }
            w => return Err(l.err(0, format!("unknown section {w:?}"))),
        }
    }
    let members = members
        .into_iter()
        .map(|m| {
            Ok(SingularNet {
                net: m.b.build().map_err(|e| CliError::Validation {
                    clause: "member".into(),
                    detail: e.to_string(),
                })?,
                pi: m.pi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SingularNetDistribution { members })
}

pub fn emit_snd(d: &SingularNetDistribution) -> String {
    let mut s = String::from("kind snd\n");
    for m in &d.members {
        s.push_str("member\n");
        for p in m.net.places() {
            let _ = writeln!(s, "place {p} : {}", m.pi[p]);
        }
        for t in m.net.transitions() {
            let _ = writeln!(
                s,
                "transition {t} : {} : {} -> {}",
                m.pi[t],
                m.net.pre(t).tokens().join(" "),
                m.net.post(t).tokens().join(" ")
            );
        }
        let _ = writeln!(s, "init {}", m.net.initial().tokens().join(" "));
    }
    tidy(s)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// System places filled, special places with a double border.
pub fn dot_petri_game(g: &PetriGame) -> String {
    let net = g.net();
    let mut s = String::from("digraph petri_game {\n  rankdir=TB;\n");
    for p in net.places() {
        let mut attrs = vec!["shape=circle".to_string()];
        if g.is_system(p) {
            attrs.push("style=filled".into());
            attrs.push("fillcolor=gray80".into());
        }
        if g.is_special(p) {
            attrs.push("peripheries=2".into());
        }
        let n = net.initial().get(p);
        let label = if n > 0 { format!("{p}\n{}", "●".repeat(n as usize)) } else { p.clone() };
        attrs.push(format!("label={}", quote(&label)));
        let _ = writeln!(s, "  {} [{}];", quote(p), attrs.join(", "));
    }
    for t in net.transitions() {
        let _ = writeln!(s, "  {} [shape=box, label={}];", quote(&format!("t:{t}")), quote(t));
        for p in net.pre(t).support() {
            let _ = writeln!(s, "  {} -> {};", quote(p), quote(&format!("t:{t}")));
        }
        for p in net.post(t).support() {
            let _ = writeln!(s, "  {} -> {};", quote(&format!("t:{t}")), quote(p));
        }
    }
    s.push_str("}\n");
    s
}

/// One cluster per process; uncontrollable moves dashed.
pub fn dot_control_game(c: &ControlGame) -> String {
    let aut = c.automaton();
    let mut s = String::from("digraph control_game {\n");
    for (i, p) in aut.processes().iter().enumerate() {
        let _ = writeln!(s, "  subgraph cluster_{i} {{\n    label={};", quote(p));
        for st in aut.local_states(p) {
            let mut attrs = vec![format!("label={}", quote(st))];
            if c.is_special(p, st) {
                attrs.push("peripheries=2".into());
            }
            if aut.initial()[p] == *st {
                attrs.push("style=bold".into());
            }
            let _ = writeln!(s, "    {} [{}];", quote(&format!("{p}/{st}")), attrs.join(", "));
        }
        s.push_str("  }\n");
    }
    let mut edges = BTreeSet::new();
    for (a, entries) in aut.delta() {
        let d: Vec<&String> = c.alphabet().dom(a).unwrap().iter().collect();
        for (from, to) in entries {
            for (k, p) in d.iter().enumerate() {
                edges.insert((format!("{p}/{}", from[k]), format!("{p}/{}", to[k]), a.clone()));
            }
        }
    }
    for (x, y, a) in edges {
        let style = if c.is_controllable(&a) { "solid" } else { "dashed" };
        let _ = writeln!(s, "  {} -> {} [label={}, style={style}];", quote(&x), quote(&y), quote(&a));
    }
    s.push_str("}\n");
    s
}

#[derive(Parser, Debug)]
#[command(name = "gb", about = "Petri games, control games and translations between them")]
struct Cli {
    /// Exploration depth for checks and solvers.
    #[arg(long, global = true, env = "GB_DEPTH", default_value_t = 8)]
    depth: usize,
    /// State cap for reachability fixpoints.
    #[arg(long, global = true, env = "GB_STATE_CAP", default_value_t = crate::nets::DEFAULT_STATE_CAP)]
    state_cap: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Translate a game and print the result.
    Translate {
        #[arg(long)]
        dir: String,
        #[arg(long)]
        variant: Option<String>,
        /// Slice or SND file to use instead of the computed one.
        #[arg(long)]
        dist: Option<PathBuf>,
        file: PathBuf,
    },
    /// Print a slice distribution, exit 1 if there is none.
    Distribute { file: PathBuf },
    /// Build and validate a singular net distribution.
    Snd { file: PathBuf },
    /// Communication graph of the computed distribution.
    Commgraph { file: PathBuf },
    /// Reduction net of a 3-CNF formula.
    #[command(name = "gen-3sat")]
    Gen3sat {
        #[arg(long)]
        clauses: String,
        #[arg(long)]
        vars: Option<usize>,
    },
    /// Lower-bound family member.
    #[command(name = "gen-lb")]
    GenLb {
        #[arg(long, default_value = "pg")]
        kind: String,
        #[arg(short)]
        n: usize,
    },
    /// Bounded winning check of a strategy file.
    #[command(name = "check-strategy")]
    CheckStrategy { file: PathBuf },
    /// Bounded winning check of a controller file.
    #[command(name = "check-controller")]
    CheckController { file: PathBuf },
    /// Bounded weak bisimulation between a strategy and a controller.
    Bisim { strategy: PathBuf, controller: PathBuf },
    /// Search for a winning strategy or controller.
    Solve {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        memory: usize,
    },
    /// DOT rendering of a game.
    Dot { file: PathBuf },
    /// Parse any file and print it in canonical form.
    Fmt { file: PathBuf },
}

/// Runs `gb` with `args` (without the program name); returns the exit code.
pub fn run_command<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> =
        std::iter::once("gb".into()).chain(args.into_iter().map(Into::into)).collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn put(out: &mut dyn Write, s: &str) -> Result<i32> {
    out.write_all(s.as_bytes()).map_err(|e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    Ok(0)
}

fn load_pg_file(p: &Path) -> Result<PetriGame> {
    match parse_game_file(p)? {
        GameFile::PetriGame(g) => Ok(g),
        _ => Err(CliError::Usage(format!("{} is not a Petri game", p.display()))),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.cmd {
        Cmd::Translate { dir, variant, dist, file } => match dir.as_str() {
            "pg2cg" => {
                let g = load_pg_file(file)?;
                let v: PgVariant = variant.as_deref().unwrap_or("plain").parse().map_err(CliError::Usage)?;
                let d = match dist {
                    None => auto_distribution(&g)?,
                    Some(p) => match parse_game_file(p)? {
                        GameFile::Slices(s) => crate::translate::Distribution::Slices(s),
                        GameFile::Snd(s) => crate::translate::Distribution::Snd(s),
                        _ => return Err(CliError::Usage("--dist needs a slices or snd file".into())),
                    },
                };
                put(out, &emit_control_game(&pg_to_cg(&g, &d, v)?.control_game))
            }
            "cg2pg" => {
                let c = match parse_game_file(file)? {
                    GameFile::ControlGame(c) => c,
                    _ => return Err(CliError::Usage("cg2pg needs a control game".into())),
                };
                let v: CgVariant = variant.as_deref().unwrap_or("deadlock").parse().map_err(CliError::Usage)?;
                let res = crate::translate::cg_to_pg_with_cap(&c, v, cli.state_cap)?;
                put(out, &emit_petri_game(&res.petri_game))
            }
            d => Err(CliError::Usage(format!("unknown direction {d:?}, expected pg2cg or cg2pg"))),
        },
        Cmd::Distribute { file } => {
            let g = load_pg_file(file)?;
            match find_slice_distribution(g.net())? {
                Some(d) => put(out, &emit_slices(&d)),
                None => {
                    put(out, "none\n")?;
                    Ok(1)
                }
            }
        }
        Cmd::Snd { file } => {
            let g = load_pg_file(file)?;
            let snd = build_snd(g.net())?;
            let r = validate_snd(g.net(), &snd);
            put(out, &emit_snd(&snd))?;
            if r.is_valid() {
                Ok(0)
            } else {
                put(out, &format!("# violations: {}\n", r.violations.join("; ")))?;
                Ok(1)
            }
        }
        Cmd::Commgraph { file } => {
            let g = load_pg_file(file)?;
            let cg = match auto_distribution(&g)? {
                crate::translate::Distribution::Slices(d) => communication_graph(&d),
                crate::translate::Distribution::Snd(d) => communication_graph(&d),
            };
            let mut s = format!("vertices {}\n", cg.vertices.join(" "));
            for (a, b) in &cg.edges {
                let _ = writeln!(s, "edge {} {}", cg.vertices[*a], cg.vertices[*b]);
            }
            let _ = writeln!(s, "acyclic {}", cg.is_acyclic());
            put(out, &s)
        }
        Cmd::Gen3sat { clauses, vars } => {
            let text = clauses
                .replace(")(", ";")
                .replace(['(', ')'], "")
                .replace(',', " ");
            let mut f: Formula = text.parse()?;
            if let Some(v) = vars {
                f.vars = f.vars.max(*v);
            }
            let net = gen_3sat_net(&f)?;
            put(out, &emit_net(&net))
        }
        Cmd::GenLb { kind, n } => match kind.as_str() {
            "pg" => put(out, &emit_petri_game(&gen_lower_bound_pg(*n))),
            "cg" => put(out, &emit_control_game(&gen_lower_bound_cg(*n))),
            k => Err(CliError::Usage(format!("unknown kind {k:?}, expected pg or cg"))),
        },
        Cmd::CheckStrategy { file } => {
            let GameFile::Strategy(sf) = parse_game_file(file)? else {
                return Err(CliError::Usage("expected a strategy file".into()));
            };
            let (g, _) = load_petri(&sf.game)?;
            let v = strategy_winning(&g, &sf.strategy, cli.depth)?;
            put(out, &format!("{v}\n"))?;
            Ok(if matches!(v, Verdict::NotWinning(_)) { 1 } else { 0 })
        }
        Cmd::CheckController { file } => {
            let GameFile::Controller(cf) = parse_game_file(file)? else {
                return Err(CliError::Usage("expected a controller file".into()));
            };
            let (c, _) = load_control(&cf.game)?;
            let v = controller_winning_bounded(&c, &cf.controller, cli.depth)?;
            put(out, &format!("{v}\n"))?;
            Ok(if matches!(v, Verdict::NotWinning(_)) { 1 } else { 0 })
        }
        Cmd::Bisim { strategy, controller } => {
            let GameFile::Strategy(sf) = parse_game_file(strategy)? else {
                return Err(CliError::Usage("first argument must be a strategy file".into()));
            };
            let GameFile::Controller(cf) = parse_game_file(controller)? else {
                return Err(CliError::Usage("second argument must be a controller file".into()));
            };
            let (g, cg_res) = load_petri(&sf.game)?;
            let (c, pg_res) = load_control(&cf.game)?;
            let map = match (pg_res, cg_res) {
                (Some(r), _) => ActionMap::pg_to_cg(&r),
                (None, Some(r)) => ActionMap::cg_to_pg(&r),
                _ => ActionMap::by_name(),
            };
            let w = weak_bisim_check(&g, &sf.strategy, &c, &cf.controller, &map, cli.depth)?;
            let json = serde_json::json!({ "depth": w.depth, "pairs": w.relation.len(), "result": w.verdict });
            put(out, &format!("{json}\n"))?;
            Ok(if matches!(w.verdict, BisimVerdict::Fail(_)) { 1 } else { 0 })
        }
        Cmd::Solve { file, memory } => {
            let base = file.parent().unwrap_or(Path::new("."));
            match parse_game_file(file)? {
                GameFile::PetriGame(g) => match solve_pg(&g, cli.depth, *memory)? {
                    Some(s) => {
                        let sf = StrategyFile {
                            game: GameRef::Petri(file.clone()),
                            strategy: s,
                        };
                        put(out, &emit_strategy(&sf, base)?)
                    }
                    None => {
                        put(out, &format!("none within depth {} and memory {memory}\n", cli.depth))?;
                        Ok(1)
                    }
                },
                GameFile::ControlGame(c) => match solve_cg(&c, cli.depth, *memory)? {
                    Some(ctrl) => {
                        let cf = ControllerFile {
                            game: GameRef::Control(file.clone()),
                            controller: ctrl,
                        };
                        put(out, &emit_controller(&cf, base)?)
                    }
                    None => {
                        put(out, &format!("none within depth {} and memory {memory}\n", cli.depth))?;
                        Ok(1)
                    }
                },
                _ => Err(CliError::Usage("solve needs a game file".into())),
            }
        }
        Cmd::Fmt { file } => put(out, &emit_file(&parse_game_file(file)?, file.parent().unwrap_or(Path::new(".")))?),
        Cmd::Dot { file } => match parse_game_file(file)? {
            GameFile::PetriGame(g) => put(out, &dot_petri_game(&g)),
            GameFile::ControlGame(c) => put(out, &dot_control_game(&c)),
            _ => Err(CliError::Usage("dot needs a game file".into())),
        },
    }
}

/// Canonical text of any parsed file; game references are written relative to `base`.
pub fn emit_file(f: &GameFile, base: &Path) -> Result<String> {
    Ok(match f {
        GameFile::PetriGame(g) => emit_petri_game(g),
        GameFile::ControlGame(c) => emit_control_game(c),
        GameFile::Strategy(s) => emit_strategy(s, base)?,
        GameFile::Controller(c) => emit_controller(c, base)?,
        GameFile::Slices(d) => emit_slices(d),
        GameFile::Snd(d) => emit_snd(d),
    })
}

/// A bare net as a Petri game file with no system or special places.
fn emit_net(net: &PetriNet) -> String {
    let report = validate_net(net);
    let g = PetriGame::new(net.clone(), Vec::<String>::new(), Vec::<String>::new(), Objective::Safety)
        .expect("generated nets are set-like");
    let mut s = emit_petri_game(&g);
    let _ = writeln!(
        s,
        "# {} places, {} transitions, concurrency-preserving {}",
        net.places().len(),
        net.transitions().len(),
        report.concurrency_preserving
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "kind petri_game\nplaces A B\ntransitions t\nflow t : A -> B\ninit A\nsystem A\nspecial B\nobjective reachability\n";

    #[test]
    fn petri_round_trip() {
        let GameFile::PetriGame(g) = parse_str(SMALL, Path::new(".")).unwrap() else {
            panic!()
        };
        assert_eq!(emit_petri_game(&g), SMALL);
    }

    #[test]
    fn one_place_loads() {
        let text = "kind petri_game\nplaces A\ninit A\nobjective safety\n";
        assert!(matches!(parse_str(text, Path::new(".")).unwrap(), GameFile::PetriGame(_)));
    }

    #[test]
    fn errors_carry_positions() {
        let text = "kind petri_game\nplaces A\nflow  t : A -> A\n";
        match parse_str(text, Path::new(".")) {
            Err(CliError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_round_trip() {
        let c = gen_lower_bound_cg(2);
        let text = emit_control_game(&c);
        let GameFile::ControlGame(c2) = parse_str(&text, Path::new(".")).unwrap() else {
            panic!()
        };
        assert_eq!(emit_control_game(&c2), text);
    }

    #[test]
    fn gen_3sat_size() {
        let mut out = Vec::new();
        let code = run_command(["gen-3sat", "--clauses", "(1,1,1)"], &mut out, &mut Vec::new());
        assert_eq!(code, 0);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("# 7 places, 2 transitions"), "{text}");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_command(["frobnicate"], &mut Vec::new(), &mut Vec::new()), 2);
    }
}
