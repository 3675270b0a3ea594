use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(name: &str) -> PathBuf {
    root().join("corpus").join(name)
}

fn probpol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probpol"))
        .args(args)
        .env_remove("PROBPOL_DIM")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let text = std::fs::read_to_string(root().join("schema").join(name)).unwrap();
    jsonschema::JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap()
}

const SHADOWED: &str = r#"SIGNAL embedding vague { candidates: ["gardening tips"] threshold: -0.99 }
SIGNAL embedding sharp { candidates: ["quantum tunneling"] threshold: -0.99 }
ROUTE broad { PRIORITY 10 WHEN embedding("vague") MODEL "small" }
ROUTE narrow { PRIORITY 5 WHEN embedding("sharp") MODEL "large" }
"#;

#[test]
fn check_reports_unguarded_cap_as_a_warning() {
    let f = corpus("listing.srdsl");
    let o = probpol(&["check", p(&f)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("PP301"));
    assert_eq!(code(&probpol(&["check", "--strict", p(&f)])), 1);
}

#[test]
fn check_on_clean_files_is_silent() {
    let o = probpol(&[
        "check",
        p(&corpus("guard_fixed.srdsl")),
        p(&corpus("signal_group.srdsl")),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty(), "{}", stdout(&o));
}

#[test]
fn missing_files_and_bad_flags_exit_two() {
    let o = probpol(&["check", "/nonexistent/policy.srdsl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot read"));
    assert_eq!(code(&probpol(&["check", "--format", "yaml", "x"])), 2);
    assert_eq!(code(&probpol(&[])), 2);
}

#[test]
fn syntax_errors_exit_one_with_location() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.srdsl", "ROUTE r {\n  PRIORITY\n}\n");
    let o = probpol(&["check", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("bad.srdsl:"), "{}", stdout(&o));
}

#[test]
fn fix_rewrites_once_and_then_is_stable() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "g.srdsl",
        &std::fs::read_to_string(corpus("guard_unguarded.srdsl")).unwrap(),
    );
    assert!(stdout(&probpol(&["check", p(&f)])).contains("PP301"));
    assert_eq!(code(&probpol(&["check", "--fix", p(&f)])), 0);
    let once = std::fs::read_to_string(&f).unwrap();
    let o = probpol(&["check", "--fix", "--strict", p(&f)]);
    assert!(!stdout(&o).contains("PP301"), "{}", stdout(&o));
    assert_eq!(once, std::fs::read_to_string(&f).unwrap());
}

#[test]
fn json_diagnostics_match_the_schema() {
    let o = probpol(&[
        "check",
        "--format",
        "json",
        p(&corpus("listing.srdsl")),
        p(&corpus("guard_unguarded.srdsl")),
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(schema("diagnostics.v1.json").is_valid(&v));
    assert!(v.as_array().unwrap().iter().any(|d| d["code"] == "PP301"));
}

#[test]
fn compile_and_decompile_round_trip() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("algebra.json");
    let back = dir.path().join("algebra.srdsl");
    assert_eq!(
        code(&probpol(&["compile", p(&corpus("algebra.srdsl")), "-o", p(&json)])),
        0
    );
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(schema("config.v1.json").is_valid(&doc));
    assert_eq!(code(&probpol(&["decompile", p(&json), "-o", p(&back)])), 0);
    let again = probpol(&["compile", p(&back)]);
    assert_eq!(stdout(&again), std::fs::read_to_string(&json).unwrap());
}

#[test]
fn decompile_reports_a_json_pointer() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "bad.json",
        r#"{"version": 1, "signals": [{"name": "x", "type": "telepathy", "config": {}}], "routes": [], "groups": [], "tests": []}"#,
    );
    let o = probpol(&["decompile", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/signals/0/type"), "{}", stderr(&o));
}

#[test]
fn test_prints_tap() {
    let f = corpus("tests_block.srdsl");
    let vectors = corpus("tests_block.vectors.json");
    let o = probpol(&["--vectors", p(&vectors), "test", p(&f)]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "TAP version 13");
    assert_eq!(lines[1], "1..4");
    assert!(lines[2..].iter().all(|l| l.starts_with("ok ")));

    let o = probpol(&["test", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("not ok 1"));
    assert!(stdout(&o).contains("expected "));
}

#[test]
fn test_without_test_blocks_is_a_usage_error() {
    let o = probpol(&["test", p(&corpus("listing.srdsl"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no TEST blocks"));
}

#[test]
fn conflicts_exit_one_on_contradiction() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "c.srdsl",
        "SIGNAL keyword a { keywords: [\"a\"] }\nROUTE r { PRIORITY 1 WHEN keyword(\"a\") AND NOT keyword(\"a\") MODEL \"m\" }\n",
    );
    let o = probpol(&["conflicts", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("contradiction [error] (1)"), "{}", stdout(&o));
}

#[test]
fn grouped_program_has_no_conflicts() {
    let o = probpol(&["conflicts", "--format", "json", p(&corpus("signal_group.srdsl"))]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(schema("conflicts.v1.json").is_valid(&v));
    assert_eq!(v[0]["reports"].as_array().unwrap().len(), 0);
}

#[test]
fn corpus_enables_soft_shadowing() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "s.srdsl", SHADOWED);
    let trace = write(&dir, "trace.txt", &"quantum tunneling\n".repeat(6));
    let o = probpol(&["conflicts", "--corpus", p(&trace), p(&f)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("soft_shadowing [warning] (1)"), "{}", stdout(&o));
    let without = probpol(&["conflicts", p(&f)]);
    assert!(!stdout(&without).contains("soft_shadowing"));
}

#[test]
fn simulate_emits_schema_valid_json() {
    let dir = TempDir::new().unwrap();
    let trace = write(&dir, "trace.txt", "integral of x\nphysics of atoms\n\nhello\n");
    let out = dir.path().join("sim.json");
    for mode in ["voronoi", "independent"] {
        let o = probpol(&[
            "simulate",
            p(&corpus("signal_group.srdsl")),
            "--trace",
            p(&trace),
            "--mode",
            mode,
            "-o",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert!(schema("simulation.v1.json").is_valid(&v));
        assert_eq!(v["queries"], 3);
        assert_eq!(v["mode"], mode);
    }
}

#[test]
fn explain_prints_scores_and_trace() {
    let o = probpol(&["explain", p(&corpus("signal_group.srdsl")), "quantum tunneling"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("signal"));
    assert!(out.contains("normalized sum 1.0000"), "{out}");
    assert!(out.contains("trace:"));
    assert!(out.contains("selected: "));
}

#[test]
fn explain_reads_attributes() {
    let f = corpus("rbac.srdsl");
    let without = stdout(&probpol(&["explain", p(&f), "hello"]));
    assert!(without.contains("selected: none"), "{without}");
    let with = stdout(&probpol(&[
        "explain",
        p(&f),
        "hello",
        "--attrs",
        r#"{"verified_employee": true}"#,
    ]));
    assert!(with.contains("selected: general_access"), "{with}");

    let dir = TempDir::new().unwrap();
    let attrs = write(&dir, "attrs.json", r#"{"verified_employee": true}"#);
    assert_eq!(
        stdout(&probpol(&["explain", p(&f), "hello", "--attrs", p(&attrs)])),
        with
    );
    assert_eq!(code(&probpol(&["explain", p(&f), "hello", "--attrs", "{not json"])), 2);
}
