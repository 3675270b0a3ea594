//! Property tests over randomized programs, conditions and queries.

mod common;

use std::collections::BTreeMap;

use probpol_core::boolean::{self, AtomKey, AtomUniverse};
use probpol_core::conflicts::{self, ConflictKind, DecidabilityTier, Evidence};
use probpol_core::constructs::certify_disjoint;
use probpol_core::diagnostic::apply_fixes;
use probpol_core::dsl::{Action, CondKind, Condition, SignalType};
use probpol_core::engine::{Attributes, EngineConfig, Mode, Reason, Router};
use probpol_core::geometry::{pseudo_embed, PseudoEmbedder};
use probpol_core::validator::validate;
use probpol_core::{config, parse, print, Program, Span};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const WORDS: &[&str] = &[
    "quantum",
    "tunneling",
    "particle",
    "probability",
    "random",
    "variable",
    "legal",
    "contract",
    "refund",
    "order",
    "hello",
    "energy",
    "mean",
    "proof",
    "theorem",
    "court",
];

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_cond_spans(c: &Condition, parent: &Span, src_len: usize) -> Result<(), String> {
    if !parent.contains(&c.span) || c.span.end() > src_len {
        return Err(format!("span {:?} escapes {:?}", c.span, parent));
    }
    match &c.kind {
        CondKind::Atom(a) => {
            if c.span.contains(&a.span) {
                Ok(())
            } else {
                Err(format!("atom span {:?} escapes {:?}", a.span, c.span))
            }
        }
        CondKind::Not(x) => check_cond_spans(x, &c.span, src_len),
        CondKind::And(x, y) | CondKind::Or(x, y) => {
            check_cond_spans(x, &c.span, src_len)?;
            check_cond_spans(y, &c.span, src_len)
        }
    }
}

fn check_spans(p: &Program, src_len: usize) -> Result<(), String> {
    for s in &p.signals {
        if s.span.end() > src_len {
            return Err(format!("signal {} span past end", s.name));
        }
    }
    for r in &p.routes {
        if r.span.end() > src_len {
            return Err(format!("route {} span past end", r.name));
        }
        check_cond_spans(&r.condition, &r.span, src_len)?;
    }
    for t in &p.trees {
        for b in &t.branches {
            if !t.span.contains(&b.span) {
                return Err("branch escapes tree".into());
            }
            check_cond_spans(&b.condition, &b.span, src_len)?;
        }
    }
    Ok(())
}

#[test]
fn corpus_spans_nest_and_parsing_is_deterministic() {
    for (name, src) in corpus_files() {
        let p = parse(&src).unwrap();
        check_spans(&p, src.len()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(p, parse(&src).unwrap(), "{name}");
    }
}

#[test]
fn clean_corpus_programs_stay_clean_after_printing() {
    for (name, src) in corpus_files() {
        let p = parse(&src).unwrap();
        if validate(&p).is_empty() {
            let again = parse(&print(&p)).unwrap();
            assert!(validate(&again).is_empty(), "{name}");
        }
    }
}

#[test]
fn compile_is_injective_on_the_corpus() {
    let docs: Vec<(String, String)> = corpus_files()
        .into_iter()
        .map(|(n, s)| {
            (
                n,
                config::to_json_string(&config::compile(&parse(&s).unwrap()).unwrap()),
            )
        })
        .collect();
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            assert_ne!(docs[i].1, docs[j].1, "{} and {}", docs[i].0, docs[j].0);
        }
    }
}

fn atom_pool(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("keyword(\"k{i}\")")).collect()
}

fn conditions_program(conds: &[String]) -> Program {
    let mut src = String::new();
    for i in 0..6 {
        src.push_str(&format!("SIGNAL keyword k{i} {{ keywords: [\"w{i}\"] }}\n"));
    }
    for (i, c) in conds.iter().enumerate() {
        src.push_str(&format!("ROUTE r{i} {{ PRIORITY {i} WHEN {c} MODEL \"m\" }}\n"));
    }
    parse(&src).unwrap()
}

fn table_sat(cs: &[&Condition], excl: &[Vec<String>]) -> bool {
    let mut vars = Vec::new();
    for c in cs {
        names(c, &mut vars);
    }
    assignments(&vars, excl).iter().any(|t| cs.iter().all(|c| eval(c, t)))
}

fn table_implies(lo: &Condition, hi: &Condition, excl: &[Vec<String>]) -> bool {
    let mut vars = Vec::new();
    names(lo, &mut vars);
    names(hi, &mut vars);
    assignments(&vars, excl).iter().all(|t| !eval(lo, t) || eval(hi, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_program_spans_nest(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_program(&mut rng);
        let p = parse(&src).unwrap();
        prop_assert!(check_spans(&p, src.len()).is_ok());
        prop_assert_eq!(&p, &parse(&src).unwrap());
    }

    #[test]
    fn boolean_queries_match_truth_tables(seed in any::<u64>(), n in 1usize..=6, with_excl in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = atom_pool(n);
        let texts: Vec<String> = (0..3).map(|_| random_condition(&mut rng, &pool, 3)).collect();
        let p = conditions_program(&texts);
        let (x, y, z) = (&p.routes[0].condition, &p.routes[1].condition, &p.routes[2].condition);

        let mut u = AtomUniverse::from_conditions([x, y, z]).unwrap();
        let mut excl = Vec::new();
        if with_excl && n >= 2 {
            let set: Vec<AtomKey> = (0..2).map(|i| AtomKey::new(SignalType::Keyword, format!("k{i}"))).collect();
            u.add_exclusive(set.iter());
            excl.push(vec!["k0".to_string(), "k1".to_string()]);
        }
        prop_assert_eq!(boolean::satisfiable(x, &u).unwrap(), table_sat(&[x], &excl));
        prop_assert_eq!(boolean::implies(x, y, &u).unwrap(), table_implies(x, y, &excl));
        prop_assert_eq!(
            boolean::equivalent_cond(x, y, &u).unwrap(),
            table_implies(x, y, &excl) && table_implies(y, x, &excl)
        );
        prop_assert_eq!(boolean::jointly_satisfiable(&[x, y], &u).unwrap(), table_sat(&[x, y], &excl));

        // Reflexive and transitive.
        prop_assert!(boolean::implies(x, x, &u).unwrap());
        if boolean::implies(x, y, &u).unwrap() && boolean::implies(y, z, &u).unwrap() {
            prop_assert!(boolean::implies(x, z, &u).unwrap());
        }
    }

    #[test]
    fn exclusivity_never_creates_satisfiability(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = atom_pool(n);
        let p = conditions_program(&[random_condition(&mut rng, &pool, 3)]);
        let c = &p.routes[0].condition;
        let plain = AtomUniverse::from_conditions([c]).unwrap();
        let mut constrained = plain.clone();
        let keys: Vec<AtomKey> = plain.atoms().iter().take(2).cloned().collect();
        constrained.add_exclusive(keys.iter());
        if !boolean::satisfiable(c, &plain).unwrap() {
            prop_assert!(!boolean::satisfiable(c, &constrained).unwrap());
        }
    }

    #[test]
    fn validation_is_deterministic_and_fixes_stick(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_program(&mut rng);
        let p = parse(&src).unwrap();
        let d = validate(&p);
        prop_assert_eq!(&d, &validate(&p));

        let mut text = src.clone();
        for _ in 0..16 {
            let diags = validate(&parse(&text).unwrap());
            let (next, n) = apply_fixes(&text, &diags);
            if n == 0 {
                break;
            }
            text = next;
        }
        let after = validate(&parse(&text).unwrap());
        prop_assert!(after.iter().all(|d| d.code != "PP301"), "{}", text);
        let (again, n) = apply_fixes(&text, &after);
        prop_assert_eq!(n, 0);
        prop_assert_eq!(again, text);
    }

    #[test]
    fn structural_verdicts_are_crisp_and_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&random_program(&mut rng)).unwrap();
        let a = conflicts::analyze_structural(&p);
        prop_assert_eq!(&a.reports, &conflicts::analyze_structural(&p).reports);
        for r in &a.reports {
            prop_assert_eq!(r.tier, DecidabilityTier::Crisp);
            let ok = matches!(
                (r.kind, &r.evidence),
                (ConflictKind::Contradiction, Evidence::Unsat { .. })
                    | (ConflictKind::Shadowing, Evidence::Implication { .. })
                    | (ConflictKind::Redundancy, Evidence::Equivalence { .. })
            );
            prop_assert!(ok);
        }
    }
}

/// Embedding signals s0..s{n-1}, some grouped, with one route each.
fn embedding_program(rng: &mut ChaCha8Rng, grouped: bool) -> String {
    let n = rng.gen_range(2..=4);
    let mut src = String::new();
    for i in 0..n {
        let cands: Vec<String> = (0..rng.gen_range(1..=2))
            .map(|_| format!("\"{}\"", phrase(rng, 2)))
            .collect();
        let t: f64 = rng.gen_range(-0.5..0.9);
        src.push_str(&format!(
            "SIGNAL embedding s{i} {{ candidates: [{}] threshold: {:.3} }}\n",
            cands.join(", "),
            t
        ));
    }
    if grouped {
        let members: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let theta: f64 = rng.gen_range(0.5..0.9);
        let temp: f64 = rng.gen_range(0.01..1.0);
        src.push_str(&format!(
            "SIGNAL_GROUP g {{ semantics: softmax_exclusive temperature: {temp:.3} members: [{}] default: s0 threshold: {theta:.3} }}\n",
            members.join(", ")
        ));
    }
    for i in 0..n {
        src.push_str(&format!(
            "ROUTE r{i} {{ PRIORITY {} WHEN embedding(\"s{i}\") MODEL \"m{i}\" }}\n",
            rng.gen_range(1..=3)
        ));
    }
    src
}

fn router(p: &Program, mode: Mode) -> Router {
    Router::new(p, EngineConfig::default().with_mode(mode)).unwrap()
}

fn quoted(s: &str) -> Vec<&str> {
    s.split('"').skip(1).step_by(2).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grouped_members_never_fire_together(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&embedding_program(&mut rng, true)).unwrap();
        let r = router(&p, Mode::Voronoi);
        let g = &p.groups[0];
        for _ in 0..20 {
            let len = rng.gen_range(1..=4);
            let q = phrase(&mut rng, len);
            let s = r.score(&q, &Attributes::new()).unwrap();
            let on = g.members.iter().filter(|m| s.is_active(m)).count();
            prop_assert!(on <= 1, "{} fired {on}", q);
            let total: f64 = g.members.iter().map(|m| s.normalized[m]).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn geometric_analysis_skips_grouped_pairs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&embedding_program(&mut rng, true)).unwrap();
        let a = conflicts::analyze_geometric(&p, &PseudoEmbedder::default());
        for r in &a.reports {
            prop_assert_eq!(r.tier, DecidabilityTier::Geometric);
            if let Evidence::CapPair { first, second, .. } = &r.evidence {
                let (x, y) = (quoted(first)[0], quoted(second)[0]);
                prop_assert!(!p.exclusive_together(x, y));
            }
        }
    }

    #[test]
    fn routing_trace_is_complete_and_priority_sound(seed in any::<u64>(), grouped in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&embedding_program(&mut rng, grouped)).unwrap();
        let r = router(&p, Mode::Voronoi);
        for _ in 0..10 {
            let q = phrase(&mut rng, 3);
            let d = r.route(&q, &Attributes::new()).unwrap();
            let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
            for t in &d.trace {
                *seen.entry(t.route.as_str()).or_default() += 1;
            }
            prop_assert_eq!(seen.len(), p.routes.len());
            prop_assert!(seen.values().all(|&c| c == 1));
            let selected: Vec<_> = d.trace.iter().filter(|t| t.reason == Reason::Selected).collect();
            prop_assert_eq!(selected.len(), usize::from(d.route.is_some()));
            if let Some(chosen) = selected.first() {
                for t in d.trace.iter().filter(|t| t.matched) {
                    prop_assert!(chosen.priority >= t.priority);
                }
            } else {
                prop_assert!(d.trace.iter().all(|t| !t.matched));
            }
        }
    }

    #[test]
    fn modes_agree_without_groups(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&embedding_program(&mut rng, false)).unwrap();
        let (v, i) = (router(&p, Mode::Voronoi), router(&p, Mode::Independent));
        for _ in 0..10 {
            let q = phrase(&mut rng, 3);
            let attrs = Attributes::new();
            prop_assert_eq!(v.route(&q, &attrs).unwrap(), i.route(&q, &attrs).unwrap());
        }
    }

    #[test]
    fn compiled_tree_routes_like_the_tree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let pool = atom_pool(n);
        let mut src = String::new();
        for i in 0..n {
            src.push_str(&format!("SIGNAL keyword k{i} {{ keywords: [\"w{i}\"] }}\n"));
        }
        let branches = rng.gen_range(1..=4);
        src.push_str("DECISION_TREE t {\n");
        for b in 0..branches {
            let kw = if b == 0 { "IF" } else { "ELSE IF" };
            src.push_str(&format!("  {kw} {} {{ MODEL \"b{b}\" }}\n", random_condition(&mut rng, &pool, 2)));
        }
        src.push_str("  ELSE { MODEL \"fallback\" }\n}\n");
        let p = parse(&src).unwrap();
        prop_assume!(!validate(&p).iter().any(|d| d.is_error()));
        let r = router(&p, Mode::Voronoi);
        let tree = &p.trees[0];
        for _ in 0..16 {
            let words: Vec<String> = (0..n).filter(|_| rng.gen_bool(0.5)).map(|i| format!("w{i}")).collect();
            let truth: BTreeMap<String, bool> =
                (0..n).map(|i| (format!("k{i}"), words.contains(&format!("w{i}")))).collect();
            let walked = tree
                .branches
                .iter()
                .find(|b| eval(&b.condition, &truth))
                .map(|b| b.action.clone())
                .or_else(|| tree.else_action.clone());
            let d = r.route(&words.join(" "), &Attributes::new()).unwrap();
            prop_assert_eq!(d.action, walked, "{}", src);
        }
    }

    #[test]
    fn certification_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = r#"SIGNAL keyword a { keywords: ["a"] }
SIGNAL keyword b { keywords: ["b"] }
SIGNAL domain m { mmlu_categories: ["x"] }
SIGNAL domain s { mmlu_categories: ["y"] }
SIGNAL embedding e { candidates: ["alpha beta"] threshold: 0.9 }
SIGNAL embedding f { candidates: ["gamma delta"] threshold: 0.9 }
SIGNAL_GROUP g { semantics: softmax_exclusive temperature: 0.1 members: [m, s] default: m }"#;
        let pool: Vec<String> = ["keyword(\"a\")", "keyword(\"b\")", "domain(\"m\")", "domain(\"s\")", "embedding(\"e\")", "embedding(\"f\")"]
            .iter().map(|s| s.to_string()).collect();
        let x = random_condition(&mut rng, &pool, 2);
        let y = random_condition(&mut rng, &pool, 2);
        let p = parse(&format!("{src}\nROUTE x {{ PRIORITY 2 WHEN {x} MODEL \"1\" }}\nROUTE y {{ PRIORITY 1 WHEN {y} MODEL \"2\" }}")).unwrap();
        let emb = PseudoEmbedder::default();
        let (cx, cy) = (&p.routes[0].condition, &p.routes[1].condition);
        let xy = certify_disjoint(cx, cy, &p, &emb).map(|c| c.method).ok();
        let yx = certify_disjoint(cy, cx, &p, &emb).map(|c| c.method).ok();
        prop_assert_eq!(xy, yx);
    }

    #[test]
    fn pseudo_embeddings_are_unit_in_both_precisions(text in "[a-z ]{0,40}", dim in 2usize..96) {
        let a = pseudo_embed::<f64>(&text, dim);
        let b = pseudo_embed::<f32>(&text, dim);
        prop_assert!((a.norm() - 1.0).abs() < 1e-9);
        prop_assert!((b.norm() - 1.0).abs() < 1e-5);
        prop_assert!((a.cosine(&b.cast::<f64>()) - 1.0).abs() < 1e-5);
    }
}

#[test]
fn model_actions_survive_compiled_trees() {
    let p = parse(&corpus_file("decision_tree.srdsl")).unwrap();
    let r = router(&p, Mode::Voronoi);
    let d = r.route("anything at all", &Attributes::new()).unwrap();
    assert!(matches!(d.action, Some(Action::Model(_))));
}
