//! Ordered diagnostic passes over a parsed program.
//!
//! Pass order: references, category overlap, guards, groups, tests, tiers,
//! constructs. Within a pass diagnostics are sorted by source position.
//! Unresolved references skip the passes that read conditions.

use std::collections::{BTreeMap, HashMap};

use crate::diagnostic::{codes, Diagnostic, Span};
use crate::dsl::printer;
use crate::dsl::*;
use crate::engine::precedence_pairs;
use crate::geometry::{centroid_separation_report, Embedder, PseudoEmbedder, DEFAULT_WARN_COSINE};
use crate::{constructs, signals};

pub struct ValidateOptions<'a> {
    pub embedder: &'a dyn Embedder<f64>,
    /// Cosine above which two group members are flagged as too close.
    pub warn_cosine: f64,
}

/// Run every pass with the default embedder.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let e = PseudoEmbedder::default();
    validate_with(
        program,
        &ValidateOptions {
            embedder: &e,
            warn_cosine: DEFAULT_WARN_COSINE,
        },
    )
}

pub fn validate_with(program: &Program, opts: &ValidateOptions<'_>) -> Vec<Diagnostic> {
    let refs = check_references(program);
    let unresolved = refs.iter().any(|d| {
        matches!(
            d.code,
            codes::UNRESOLVED_SIGNAL | codes::SIGNAL_TYPE_MISMATCH | codes::UNRESOLVED_POLICY
        )
    });
    let mut out = Vec::new();
    let mut push = |mut pass: Vec<Diagnostic>| {
        pass.sort_by_key(|d| d.span.offset);
        out.extend(pass);
    };
    push(refs);
    push(check_category_overlap(program));
    if !unresolved {
        push(check_guards(program));
    }
    push(check_groups(program, opts));
    push(check_tests(program, opts.embedder));
    push(check_tiers(program));
    if unresolved {
        let file = program
            .signals
            .first()
            .map(|s| s.span.file.clone())
            .or_else(|| program.routes.first().map(|r| r.span.file.clone()))
            .unwrap_or_else(|| Span::default().file);
        push(vec![Diagnostic::info(
            codes::PASSES_SKIPPED,
            Span {
                file,
                ..Span::default()
            },
            "guard and construct checks skipped because some references are unresolved",
        )]);
    } else {
        push(check_constructs(program, opts.embedder));
    }
    out
}

fn conditions(program: &Program) -> Vec<&Condition> {
    fn alg<'a>(e: &'a AlgebraExpr, out: &mut Vec<&'a Condition>) {
        match &e.kind {
            AlgebraKind::Leaf { condition, .. } => out.push(condition),
            AlgebraKind::ExclusiveUnion(l, r) | AlgebraKind::Sequential(l, r) => {
                alg(l, out);
                alg(r, out);
            }
            AlgebraKind::Default { .. } | AlgebraKind::Ref(_) => {}
        }
    }
    let mut out: Vec<&Condition> = program.routes.iter().map(|r| &r.condition).collect();
    for t in &program.trees {
        out.extend(t.branches.iter().map(|b| &b.condition));
    }
    for p in &program.policies {
        alg(&p.expr, &mut out);
    }
    out
}

fn duplicates<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a Span)>,
    code: &'static str,
    what: &str,
    out: &mut Vec<Diagnostic>,
) {
    let mut seen: HashMap<&str, &Span> = HashMap::new();
    for (name, span) in items {
        if let Some(first) = seen.get(name) {
            out.push(Diagnostic::error(
                code,
                span.clone(),
                format!("duplicate {what} `{name}` (first declared at line {})", first.line),
            ));
        } else {
            seen.insert(name, span);
        }
    }
}

/// Names, atom references, policy references and signal configs.
pub fn check_references(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    duplicates(
        program.signals.iter().map(|s| (s.name.as_str(), &s.span)),
        codes::DUPLICATE_SIGNAL,
        "signal",
        &mut out,
    );
    duplicates(
        program.routes.iter().map(|r| (r.name.as_str(), &r.span)),
        codes::DUPLICATE_ROUTE,
        "route",
        &mut out,
    );
    duplicates(
        program.groups.iter().map(|g| (g.name.as_str(), &g.span)),
        codes::DUPLICATE_BLOCK,
        "SIGNAL_GROUP",
        &mut out,
    );
    duplicates(
        program.tests.iter().map(|t| (t.name.as_str(), &t.span)),
        codes::DUPLICATE_BLOCK,
        "TEST block",
        &mut out,
    );
    duplicates(
        program
            .trees
            .iter()
            .map(|t| (t.name.as_str(), &t.span))
            .chain(program.policies.iter().map(|p| (p.name.as_str(), &p.span))),
        codes::DUPLICATE_BLOCK,
        "DECISION_TREE/POLICY",
        &mut out,
    );

    for s in &program.signals {
        for problem in signals::config_problems(s) {
            out.push(Diagnostic::error(
                codes::INVALID_SIGNAL_CONFIG,
                s.span.clone(),
                format!("signal `{}`: {problem}", s.name),
            ));
        }
    }

    for c in conditions(program) {
        for a in c.atoms() {
            match program.signal(&a.name) {
                None => out.push(Diagnostic::error(
                    codes::UNRESOLVED_SIGNAL,
                    a.span.clone(),
                    format!("unresolved signal: no SIGNAL named `{}` is declared", a.name),
                )),
                Some(s) if s.signal_type != a.signal_type => out.push(Diagnostic::error(
                    codes::SIGNAL_TYPE_MISMATCH,
                    a.span.clone(),
                    format!(
                        "signal `{}` is declared as {} but referenced as {}",
                        a.name, s.signal_type, a.signal_type
                    ),
                )),
                Some(_) => {}
            }
        }
    }

    out.extend(check_policy_refs(program));
    out
}

fn check_policy_refs(program: &Program) -> Vec<Diagnostic> {
    fn refs<'a>(e: &'a AlgebraExpr, out: &mut Vec<(&'a str, &'a Span)>) {
        match &e.kind {
            AlgebraKind::Ref(n) => out.push((n, &e.span)),
            AlgebraKind::ExclusiveUnion(l, r) | AlgebraKind::Sequential(l, r) => {
                refs(l, out);
                refs(r, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in &program.policies {
        let mut rs = Vec::new();
        refs(&p.expr, &mut rs);
        for (name, span) in &rs {
            if program.policy(name).is_none() {
                out.push(Diagnostic::error(
                    codes::UNRESOLVED_POLICY,
                    (*span).clone(),
                    format!("unresolved policy reference `{name}`"),
                ));
            }
        }
        edges.insert(&p.name, rs.iter().map(|(n, _)| *n).collect());
    }
    // Depth-first search for a cycle through each policy.
    for p in &program.policies {
        let mut stack = vec![(p.name.as_str(), 0usize)];
        let mut path: Vec<&str> = vec![&p.name];
        let mut cyclic = false;
        while let Some((node, idx)) = stack.pop() {
            let next = edges.get(node).and_then(|v| v.get(idx)).copied();
            match next {
                None => {
                    path.pop();
                }
                Some(n) => {
                    stack.push((node, idx + 1));
                    if n == p.name {
                        cyclic = true;
                        break;
                    }
                    if !path.contains(&n) && edges.contains_key(n) {
                        path.push(n);
                        stack.push((n, 0));
                    }
                }
            }
        }
        if cyclic {
            out.push(Diagnostic::error(
                codes::UNRESOLVED_POLICY,
                p.span.clone(),
                format!("policy `{}` refers back to itself", p.name),
            ));
        }
    }
    out
}

/// Categories owned by more than one domain signal. The first declaring
/// signal owns a category.
pub fn check_category_overlap(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for s in program.signals.iter().filter(|s| s.signal_type == SignalType::Domain) {
        let mut own: Vec<&str> = Vec::new();
        for cat in s.mmlu_categories() {
            if own.contains(&cat) {
                out.push(Diagnostic::info(
                    codes::DUPLICATE_CATEGORY,
                    s.span.clone(),
                    format!("signal `{}` lists category \"{cat}\" more than once", s.name),
                ));
                continue;
            }
            own.push(cat);
            match owner.get(cat) {
                Some(first) => out.push(Diagnostic::warning(
                    codes::CATEGORY_OVERLAP,
                    s.span.clone(),
                    format!(
                        "category \"{cat}\" is listed by both `{first}` and `{}`; `{first}` owns it",
                        s.name
                    ),
                )),
                None => {
                    owner.insert(cat, &s.name);
                }
            }
        }
    }
    out
}

/// Lower-precedence routes that share a signal type with a higher one but
/// do not exclude its atoms.
pub fn check_guards(program: &Program) -> Vec<Diagnostic> {
    let routes = &program.routes;
    let mut missing: BTreeMap<usize, Vec<(SignalType, String, String)>> = BTreeMap::new();
    for (hi, lo) in precedence_pairs(routes) {
        let (h, l) = (&routes[hi], &routes[lo]);
        let lo_pos = l.condition.positive_atoms();
        for a in h.condition.positive_atoms() {
            let overlaps = lo_pos.iter().any(|b| {
                b.signal_type == a.signal_type && b.name != a.name && !program.exclusive_together(&a.name, &b.name)
            });
            let already = l.condition.contains_negated(a.signal_type, &a.name)
                || lo_pos
                    .iter()
                    .any(|b| b.name == a.name && b.signal_type == a.signal_type);
            if overlaps && !already {
                let entry = missing.entry(lo).or_default();
                if !entry.iter().any(|(t, n, _)| *t == a.signal_type && *n == a.name) {
                    entry.push((a.signal_type, a.name.clone(), h.name.clone()));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (lo, guards) in missing {
        let l = &routes[lo];
        let base = printer::condition(&l.condition);
        let base = if matches!(l.condition.kind, CondKind::Or(..)) {
            format!("({base})")
        } else {
            base
        };
        let suffix: String = guards
            .iter()
            .map(|(t, n, _)| format!(" AND NOT {t}({})", printer::quote(n)))
            .collect();
        let against: Vec<String> = guards
            .iter()
            .map(|(t, n, h)| format!("{t}({}) of `{h}`", printer::quote(n)))
            .collect();
        out.push(
            Diagnostic::warning(
                codes::MISSING_GUARD,
                l.condition.span.clone(),
                format!(
                    "route `{}` may overlap with higher-precedence {}; add a NOT guard",
                    l.name,
                    against.join(", ")
                ),
            )
            .with_fix(l.condition.span.clone(), format!("{base}{suffix}")),
        );
    }
    out
}

/// Group well-formedness.
pub fn check_groups(program: &Program, opts: &ValidateOptions<'_>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut membership: HashMap<&str, &str> = HashMap::new();
    for g in &program.groups {
        let span = &g.span;
        let mut present = Vec::new();
        for m in &g.members {
            match program.signal(m) {
                None => out.push(Diagnostic::error(
                    codes::GROUP_MISSING_MEMBER,
                    span.clone(),
                    format!("group `{}` names undeclared member `{m}`", g.name),
                )),
                Some(s) => {
                    if s.signal_type.kind() == SignalKind::Crisp {
                        out.push(Diagnostic::warning(
                            codes::GROUP_CRISP_MEMBER,
                            span.clone(),
                            format!(
                                "member `{m}` of group `{}` is a crisp {} signal; softmax normalization does not apply to it",
                                g.name, s.signal_type
                            ),
                        ));
                    }
                    present.push(s);
                }
            }
            match membership.get(m.as_str()) {
                Some(other) if *other != g.name => out.push(Diagnostic::warning(
                    codes::GROUP_OVERLAPPING_MEMBERSHIP,
                    span.clone(),
                    format!("signal `{m}` is a member of both `{other}` and `{}`", g.name),
                )),
                _ => {
                    membership.insert(m, &g.name);
                }
            }
        }

        let mut cat_owner: HashMap<&str, &str> = HashMap::new();
        for s in &present {
            if s.signal_type.kind() != SignalKind::Classifier {
                continue;
            }
            for c in s.mmlu_categories() {
                match cat_owner.get(c) {
                    Some(o) if *o != s.name => out.push(Diagnostic::error(
                        codes::GROUP_SHARED_CATEGORY,
                        span.clone(),
                        format!(
                            "members `{o}` and `{}` of group `{}` share category \"{c}\"",
                            s.name, g.name
                        ),
                    )),
                    _ => {
                        cat_owner.insert(c, &s.name);
                    }
                }
            }
        }

        match &g.default {
            None => out.push(Diagnostic::error(
                codes::GROUP_DEFAULT,
                span.clone(),
                format!("group `{}` has no default signal", g.name),
            )),
            Some(d) if !g.members.contains(d) => out.push(Diagnostic::error(
                codes::GROUP_DEFAULT,
                span.clone(),
                format!("default `{d}` of group `{}` is not one of its members", g.name),
            )),
            Some(_) => {}
        }
        if g.temperature.is_nan() || g.temperature <= 0.0 {
            out.push(Diagnostic::error(
                codes::GROUP_TEMPERATURE,
                span.clone(),
                format!("group `{}` needs a positive temperature, got {}", g.name, g.temperature),
            ));
        }
        let k = g.members.len().max(1) as f64;
        let theta = g.group_threshold();
        if theta <= 1.0 / k && !g.guarantees_exclusion() {
            out.push(Diagnostic::warning(
                codes::GROUP_THRESHOLD,
                span.clone(),
                format!(
                    "group `{}` fires at {theta} which does not exceed 1/{} = {:.4}; two members may fire together",
                    g.name,
                    g.members.len(),
                    1.0 / k
                ),
            ));
        } else if !g.guarantees_exclusion() {
            out.push(Diagnostic::warning(
                codes::GROUP_THRESHOLD,
                span.clone(),
                format!(
                    "group `{}` fires at {theta}; below 0.5 two near-tied members can both fire, so it is not treated as exclusive",
                    g.name
                ),
            ));
        }

        let soft: Vec<&SignalDecl> = present
            .iter()
            .copied()
            .filter(|s| s.signal_type.kind() != SignalKind::Crisp)
            .collect();
        let cents: Vec<_> = soft
            .iter()
            .filter_map(|s| signals::signal_centroid(s, opts.embedder).ok().map(|c| (s, c)))
            .collect();
        let vs: Vec<_> = cents.iter().map(|(_, c)| c.clone()).collect();
        for (i, j, cos) in centroid_separation_report(&vs, opts.warn_cosine) {
            out.push(Diagnostic::warning(
                codes::GROUP_CENTROIDS_CLOSE,
                span.clone(),
                format!(
                    "members `{}` and `{}` of group `{}` have centroids at cosine {cos:.3}; the softmax will split queries between them unreliably",
                    cents[i].0.name, cents[j].0.name, g.name
                ),
            ));
        }
    }
    out
}

/// Test targets must exist; queries must be non-empty.
pub fn check_tests(program: &Program, embedder: &dyn Embedder<f64>) -> Vec<Diagnostic> {
    let compiled = constructs::compile_constructs(program, embedder);
    let known: Vec<&str> = program
        .routes
        .iter()
        .chain(&compiled.routes)
        .map(|r| r.name.as_str())
        .collect();
    let mut out = Vec::new();
    for t in &program.tests {
        for c in &t.cases {
            if c.query.trim().is_empty() {
                out.push(Diagnostic::error(
                    codes::TEST_EMPTY_QUERY,
                    c.span.clone(),
                    format!("test `{}` has an empty query", t.name),
                ));
            }
            if !known.contains(&c.expected_route.as_str()) {
                out.push(Diagnostic::error(
                    codes::TEST_UNKNOWN_ROUTE,
                    c.span.clone(),
                    format!("test `{}` expects unknown route `{}`", t.name, c.expected_route),
                ));
            }
        }
    }
    out
}

/// Either every route has a TIER or none does.
pub fn check_tiers(program: &Program) -> Vec<Diagnostic> {
    let tiered: Vec<&RouteDecl> = program.routes.iter().filter(|r| r.tier.is_some()).collect();
    if tiered.is_empty() {
        return Vec::new();
    }
    if tiered.len() != program.routes.len() {
        return program
            .routes
            .iter()
            .filter(|r| r.tier.is_none())
            .map(|r| {
                Diagnostic::error(
                    codes::TIER_MIXED,
                    r.span.clone(),
                    format!(
                        "route `{}` has no TIER while other routes do; tiers are all-or-none",
                        r.name
                    ),
                )
            })
            .collect();
    }
    let mut by_tier: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &tiered {
        *by_tier.entry(r.tier.unwrap_or(0)).or_default() += 1;
    }
    let desc: Vec<String> = by_tier
        .iter()
        .map(|(t, n)| format!("tier {t}: {n} route{}", if *n == 1 { "" } else { "s" }))
        .collect();
    vec![Diagnostic::info(
        codes::TIER_STRUCTURE,
        tiered[0].span.clone(),
        format!("tiered routing; {}", desc.join(", ")),
    )]
}

/// Tree and policy checks, plus name clashes with compiled routes.
pub fn check_constructs(program: &Program, embedder: &dyn Embedder<f64>) -> Vec<Diagnostic> {
    let c = constructs::compile_constructs(program, embedder);
    let mut out = c.diagnostics;
    for r in &c.routes {
        if let Some(user) = program.route(&r.name) {
            out.push(Diagnostic::error(
                codes::DUPLICATE_ROUTE,
                user.span.clone(),
                format!("route `{}` clashes with a compiled tree or policy route", r.name),
            ));
        }
    }
    out
}
