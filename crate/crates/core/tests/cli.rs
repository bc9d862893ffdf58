mod common;

use std::process::Command;

use common::fixture;
use gamebridge::cli::run_command;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_command(args.iter().copied(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

const FIXTURES: [&str; 9] = [
    "burglary.pg",
    "fig14.controller",
    "fig15.pg",
    "fig16.cg",
    "fig5.pg",
    "fig5.strategy",
    "fig7.controller",
    "fig9.cg",
    "manager.cg",
];

#[test]
fn fmt_is_identity_on_fixtures() {
    for f in FIXTURES {
        let (code, out, err) = run(&["fmt", &path(f)]);
        assert_eq!(code, 0, "{f}: {err}");
        assert_eq!(out, std::fs::read_to_string(fixture(f)).unwrap(), "{f}");
    }
}

#[test]
fn translation_output_parses_back() {
    let dir = std::env::temp_dir().join(format!("gb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (dir_arg, f, ext) in [("pg2cg", "fig5.pg", "cg"), ("cg2pg", "fig16.cg", "pg"), ("cg2pg", "manager.cg", "pg")] {
        let (code, out, err) = run(&["translate", "--dir", dir_arg, &path(f)]);
        assert_eq!(code, 0, "{f}: {err}");
        let p = dir.join(format!("{f}.{ext}"));
        std::fs::write(&p, &out).unwrap();
        let (code, again, _) = run(&["fmt", &p.to_string_lossy()]);
        assert_eq!(code, 0);
        assert_eq!(again, out, "{f}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn outputs_are_deterministic() {
    for args in [
        vec!["translate", "--dir", "pg2cg", "fig5.pg"],
        vec!["translate", "--dir", "cg2pg", "--variant", "challenge", "fig16.cg"],
        vec!["snd", "fig5.pg"],
        vec!["commgraph", "burglary.pg"],
        vec!["dot", "fig9.cg"],
        vec!["solve", "--depth", "6", "fig5.pg"],
    ] {
        let args: Vec<String> = args
            .iter()
            .map(|a| if a.contains('.') { path(a) } else { a.to_string() })
            .collect();
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(run(&args), run(&args), "{args:?}");
    }
}

#[test]
fn dot_marks_players_and_special_places() {
    let (code, out, _) = run(&["dot", &path("fig5.pg")]);
    assert_eq!(code, 0);
    let g = common::pg("fig5.pg");
    for p in g.net().places() {
        let line = out.lines().find(|l| l.trim_start().starts_with(&format!("\"{p}\" ["))).unwrap();
        assert_eq!(line.contains("style=filled"), g.is_system(p), "{line}");
        assert_eq!(line.contains("peripheries=2"), g.is_special(p), "{line}");
    }
    let (_, out, _) = run(&["dot", &path("fig16.cg")]);
    assert!(out.starts_with("digraph control_game"));
    assert!(out.contains("style=dashed"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["check-strategy", &path("fig5.strategy")]).0, 0);
    assert_eq!(run(&["--depth", "12", "check-controller", &path("fig7.controller")]).0, 0);
    assert_eq!(run(&["bisim", &path("fig5.strategy"), &path("fig7.controller")]).0, 0);
    assert_eq!(run(&["distribute", &path("fig5.pg")]).0, 0);
    assert_eq!(run(&["solve", "--depth", "6", &path("fig9.cg")]).0, 1);
    assert_eq!(run(&["translate", "--dir", "sideways", &path("fig5.pg")]).0, 2);
    assert_eq!(run(&["fmt", "/nonexistent/game.pg"]).0, 2);
    let (code, _, err) = run(&["check-strategy", &path("fig5.pg")]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn binary_matches_library_entry() {
    let out = Command::new(env!("CARGO_BIN_EXE_gb")).args(["fmt", &path("manager.cg")]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), run(&["fmt", &path("manager.cg")]).1);
    let bad = Command::new(env!("CARGO_BIN_EXE_gb")).arg("frobnicate").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
