//! Helpers shared by the integration targets. Oracles here avoid the
//! crate's own analysis code so they can check it.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use probpol_core::dsl::{CondKind, Condition};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema")
}

/// Every `.srdsl` file of the corpus, sorted by name.
pub fn corpus_files() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "srdsl"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub fn corpus_file(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap()
}

/// Truth value of `c` under `truth`, keyed by signal name.
pub fn eval(c: &Condition, truth: &BTreeMap<String, bool>) -> bool {
    match &c.kind {
        CondKind::Atom(a) => truth[&a.name],
        CondKind::Not(x) => !eval(x, truth),
        CondKind::And(x, y) => eval(x, truth) && eval(y, truth),
        CondKind::Or(x, y) => eval(x, truth) || eval(y, truth),
    }
}

pub fn names(c: &Condition, out: &mut Vec<String>) {
    match &c.kind {
        CondKind::Atom(a) => {
            if !out.contains(&a.name) {
                out.push(a.name.clone());
            }
        }
        CondKind::Not(x) => names(x, out),
        CondKind::And(x, y) | CondKind::Or(x, y) => {
            names(x, out);
            names(y, out);
        }
    }
}

/// All assignments over `vars` that respect every at-most-one set.
pub fn assignments(vars: &[String], at_most_one: &[Vec<String>]) -> Vec<BTreeMap<String, bool>> {
    let n = vars.len();
    let mut out = Vec::new();
    for bits in 0u32..(1 << n) {
        let t: BTreeMap<String, bool> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), bits >> i & 1 == 1))
            .collect();
        let ok = at_most_one
            .iter()
            .all(|set| set.iter().filter(|m| t.get(*m).copied().unwrap_or(false)).count() <= 1);
        if ok {
            out.push(t);
        }
    }
    out
}

/// Random condition text over `atoms` (each `type("name")`).
pub fn random_condition(rng: &mut ChaCha8Rng, atoms: &[String], depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.35) {
        let a = &atoms[rng.gen_range(0..atoms.len())];
        return if rng.gen_bool(0.25) {
            format!("NOT {a}")
        } else {
            a.clone()
        };
    }
    let l = random_condition(rng, atoms, depth - 1);
    let r = random_condition(rng, atoms, depth - 1);
    match rng.gen_range(0..3) {
        0 => format!("({l} AND {r})"),
        1 => format!("({l} OR {r})"),
        _ => format!("NOT ({l} AND {r})"),
    }
}

/// A random program over at most six atoms: keyword and domain signals,
/// sometimes a group over the domain ones, two to four routes.
pub fn random_program(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=6);
    let mut src = String::new();
    let mut atoms = Vec::new();
    let mut domains = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.5) {
            src.push_str(&format!("SIGNAL keyword k{i} {{ keywords: [\"w{i}\"] }}\n"));
            atoms.push(format!("keyword(\"k{i}\")"));
        } else {
            src.push_str(&format!("SIGNAL domain d{i} {{ mmlu_categories: [\"c{i}\"] }}\n"));
            atoms.push(format!("domain(\"d{i}\")"));
            domains.push(format!("d{i}"));
        }
    }
    if domains.len() >= 2 && rng.gen_bool(0.5) {
        let theta = if rng.gen_bool(0.7) { 0.5 } else { 0.3 };
        src.push_str(&format!(
            "SIGNAL_GROUP g {{ semantics: softmax_exclusive temperature: 0.1 members: [{}] default: {} threshold: {theta} }}\n",
            domains.join(", "),
            domains[0]
        ));
    }
    let routes = rng.gen_range(2..=4);
    for r in 0..routes {
        let prio = rng.gen_range(1..=3);
        let model = rng.gen_range(0..2);
        let cond = random_condition(rng, &atoms, 2);
        src.push_str(&format!(
            "ROUTE r{r} {{ PRIORITY {prio} WHEN {cond} MODEL \"m{model}\" }}\n"
        ));
    }
    src
}
