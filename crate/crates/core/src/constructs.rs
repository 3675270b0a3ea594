//! Policies that are conflict-free by construction.
//!
//! A `DECISION_TREE` compiles to routes whose conditions are pairwise
//! disjoint: branch `i` is guarded by the negation of every earlier branch.
//! A `POLICY` combines leaves with exclusive union `(+)`, which must be
//! certified disjoint, and sequential composition `>>`, which compiles to
//! strictly decreasing priorities.

use std::fmt;

use crate::boolean::{self, AnalysisError, AtomKey, AtomUniverse};
use crate::diagnostic::{codes, Diagnostic, Span};
use crate::dsl::printer;
use crate::dsl::*;
use crate::geometry::{caps_intersect, CapRelation, Embedder};
use crate::signals;

/// Priority gap between consecutive compiled routes.
pub const PRIORITY_STEP: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CertificateMethod {
    /// The conjunction is propositionally unsatisfiable.
    SatUnsat,
    /// Unsatisfiable once disjoint embedding caps are taken into account.
    CapsDisjoint,
    /// Unsatisfiable once softmax-exclusive groups are taken into account.
    GroupExclusive,
}

impl CertificateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateMethod::SatUnsat => "sat_unsat",
            CertificateMethod::CapsDisjoint => "caps_disjoint",
            CertificateMethod::GroupExclusive => "group_exclusive",
        }
    }
}

impl fmt::Display for CertificateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisjointnessCertificate {
    pub method: CertificateMethod,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertifyError {
    /// The operands may fire together, or that cannot be ruled out.
    Uncertified(String),
    Incomplete(AnalysisError),
}

impl From<AnalysisError> for CertifyError {
    fn from(e: AnalysisError) -> Self {
        CertifyError::Incomplete(e)
    }
}

fn mixes_kinds(c: &Condition, program: &Program) -> bool {
    let kinds: Vec<bool> = c
        .atoms()
        .iter()
        .map(|a| kind_of(a, program) == SignalKind::Crisp)
        .collect();
    kinds.iter().any(|&k| k) && kinds.iter().any(|&k| !k)
}

fn kind_of(a: &Atom, program: &Program) -> SignalKind {
    program.signal(&a.name).map_or(a.signal_type, |s| s.signal_type).kind()
}

/// Certify that `x` and `y` never hold on the same query.
///
/// Propositional unsatisfiability is tried first. A condition that mixes
/// crisp and probabilistic atoms is certified only that way. Otherwise group
/// exclusivity and then disjoint embedding caps are added as at-most-one
/// constraints.
pub fn certify_disjoint(
    x: &Condition,
    y: &Condition,
    program: &Program,
    embedder: &dyn Embedder<f64>,
) -> Result<DisjointnessCertificate, CertifyError> {
    let base = AtomUniverse::from_conditions([x, y])?;
    if !boolean::jointly_satisfiable(&[x, y], &base)? {
        return Ok(DisjointnessCertificate {
            method: CertificateMethod::SatUnsat,
            detail: format!("conjunction is unsatisfiable over {} atoms", base.len()),
        });
    }
    if mixes_kinds(x, program) || mixes_kinds(y, program) {
        return Err(CertifyError::Uncertified(
            "a leaf mixes crisp and probabilistic atoms and its crisp part alone does not separate the operands".into(),
        ));
    }
    let grouped = base.clone().with_groups(program);
    if !boolean::jointly_satisfiable(&[x, y], &grouped)? {
        let names = group_names_covering(x, y, program);
        return Ok(DisjointnessCertificate {
            method: CertificateMethod::GroupExclusive,
            detail: format!("at most one member of {names} fires"),
        });
    }

    let mut caps = grouped.clone();
    let mut disjoint = Vec::new();
    for a in x.atoms() {
        for b in y.atoms() {
            if a.name == b.name || kind_of(a, program) != SignalKind::Geometric {
                continue;
            }
            if kind_of(b, program) != SignalKind::Geometric {
                continue;
            }
            let (Some(sa), Some(sb)) = (program.signal(&a.name), program.signal(&b.name)) else {
                continue;
            };
            let (Ok(ca), Ok(cb)) = (signals::signal_cap(sa, embedder), signals::signal_cap(sb, embedder)) else {
                continue;
            };
            if let CapRelation::Disjoint { margin } = caps_intersect(&ca, &cb) {
                caps.add_exclusive(&[AtomKey::from(a), AtomKey::from(b)]);
                disjoint.push(format!(
                    "{} / {} (margin {:.4} rad)",
                    printer::atom(a),
                    printer::atom(b),
                    margin
                ));
            }
        }
    }
    if !disjoint.is_empty() && !boolean::jointly_satisfiable(&[x, y], &caps)? {
        disjoint.dedup();
        return Ok(DisjointnessCertificate {
            method: CertificateMethod::CapsDisjoint,
            detail: format!("disjoint caps: {}", disjoint.join(", ")),
        });
    }

    let witness = boolean::witness(&Condition::and(x.clone(), y.clone()), &grouped)?;
    let firing: Vec<String> = match witness {
        Some(w) => grouped
            .atoms()
            .iter()
            .enumerate()
            .filter(|(i, _)| w.get(*i))
            .map(|(_, k)| k.to_string())
            .collect(),
        None => Vec::new(),
    };
    let classifiers: Vec<String> = firing
        .iter()
        .filter(|k| {
            grouped
                .atoms()
                .iter()
                .find(|a| &a.to_string() == *k)
                .is_some_and(|a| a.signal_type.kind() == SignalKind::Classifier)
        })
        .cloned()
        .collect();
    let reason = if classifiers.len() >= 2 {
        format!(
            "classifier signals {} are not members of one softmax_exclusive group",
            classifiers.join(" and ")
        )
    } else if firing.is_empty() {
        "both operands can fire on the same query".to_string()
    } else {
        format!("both operands fire when {} hold", firing.join(", "))
    };
    Err(CertifyError::Uncertified(reason))
}

fn group_names_covering(x: &Condition, y: &Condition, program: &Program) -> String {
    let mut names: Vec<String> = Vec::new();
    for a in x.atoms() {
        for b in y.atoms() {
            for g in &program.groups {
                if g.guarantees_exclusion()
                    && g.members.contains(&a.name)
                    && g.members.contains(&b.name)
                    && !names.contains(&g.name)
                {
                    names.push(g.name.clone());
                }
            }
        }
    }
    if names.is_empty() {
        "the declared groups".into()
    } else {
        names
            .iter()
            .map(|n| format!("group `{n}`"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn and_all(mut parts: Vec<Condition>) -> Option<Condition> {
    if parts.is_empty() {
        return None;
    }
    let first = parts.remove(0);
    Some(parts.into_iter().fold(first, Condition::and))
}

fn or_all(mut parts: Vec<Condition>) -> Option<Condition> {
    if parts.is_empty() {
        return None;
    }
    let first = parts.remove(0);
    Some(parts.into_iter().fold(first, Condition::or))
}

/// `cond AND NOT earlier_1 AND ... AND NOT earlier_k`.
fn guarded(cond: &Condition, earlier: &[&Condition]) -> Condition {
    earlier
        .iter()
        .fold(cond.clone(), |acc, e| Condition::and(acc, Condition::not((*e).clone())))
}

// ---- decision trees ----

/// Exhaustiveness and reachability of `tree`.
pub fn check_tree(tree: &DecisionTreeDecl, program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if tree.else_action.is_none() {
        out.push(Diagnostic::error(
            codes::TREE_MISSING_ELSE,
            tree.span.clone(),
            format!(
                "decision tree `{}` has no ELSE branch; every tree needs a catch-all",
                tree.name
            ),
        ));
    }
    let universe = match AtomUniverse::from_conditions(tree.branches.iter().map(|b| &b.condition)) {
        Ok(u) => u.with_groups(program),
        Err(e) => {
            out.push(Diagnostic::error(
                codes::ANALYSIS_INCOMPLETE,
                tree.span.clone(),
                format!("reachability of `{}` not checked: {e}", tree.name),
            ));
            return out;
        }
    };
    for (i, b) in tree.branches.iter().enumerate() {
        let earlier: Vec<&Condition> = tree.branches[..i].iter().map(|b| &b.condition).collect();
        let reach = guarded(&b.condition, &earlier);
        match boolean::satisfiable(&reach, &universe) {
            Ok(true) => {}
            Ok(false) => {
                let why = if i == 0 || !boolean::satisfiable(&b.condition, &universe).unwrap_or(true) {
                    "its condition can never hold"
                } else {
                    "every query it matches is taken by an earlier branch"
                };
                out.push(Diagnostic::error(
                    codes::TREE_UNREACHABLE_BRANCH,
                    b.span.clone(),
                    format!(
                        "branch {} of decision tree `{}` is unreachable: {why}",
                        i + 1,
                        tree.name
                    ),
                ));
            }
            Err(e) => out.push(Diagnostic::error(
                codes::ANALYSIS_INCOMPLETE,
                b.span.clone(),
                e.to_string(),
            )),
        }
    }
    out
}

/// Routes `<tree>_<i>` for each branch and `<tree>_else` for the catch-all.
pub fn compile_tree(tree: &DecisionTreeDecl) -> Vec<RouteDecl> {
    let n = tree.branches.len() as u64;
    let mut routes = Vec::new();
    for (i, b) in tree.branches.iter().enumerate() {
        let earlier: Vec<&Condition> = tree.branches[..i].iter().map(|b| &b.condition).collect();
        routes.push(RouteDecl {
            name: format!("{}_{}", tree.name, i + 1),
            priority: (n - i as u64) * PRIORITY_STEP,
            tier: None,
            condition: guarded(&b.condition, &earlier),
            action: b.action.clone(),
            span: b.span.clone(),
        });
    }
    if let Some(action) = &tree.else_action {
        let negs: Vec<Condition> = tree
            .branches
            .iter()
            .map(|b| Condition::not(b.condition.clone()))
            .collect();
        if let Some(condition) = and_all(negs) {
            routes.push(RouteDecl {
                name: format!("{}_else", tree.name),
                priority: 0,
                tier: None,
                condition,
                action: action.clone(),
                span: tree.span.clone(),
            });
        }
    }
    routes
}

// ---- policy algebra ----

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLeaf {
    pub condition: Condition,
    pub action: Action,
    pub span: Span,
}

/// A certified pair of union operands.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedPair {
    pub policy: String,
    pub left: String,
    pub right: String,
    pub certificate: DisjointnessCertificate,
}

struct AlgebraCompiler<'a> {
    program: &'a Program,
    embedder: &'a dyn Embedder<f64>,
    policy: String,
    stack: Vec<String>,
    diagnostics: Vec<Diagnostic>,
    certificates: Vec<CertifiedPair>,
}

impl AlgebraCompiler<'_> {
    fn leaves(&mut self, e: &AlgebraExpr) -> Vec<CompiledLeaf> {
        match &e.kind {
            AlgebraKind::Leaf { condition, action } => vec![CompiledLeaf {
                condition: condition.clone(),
                action: action.clone(),
                span: e.span.clone(),
            }],
            AlgebraKind::Default { .. } => {
                self.diagnostics.push(Diagnostic::error(
                    codes::MISPLACED_DEFAULT,
                    e.span.clone(),
                    "DEFAULT is only meaningful as an operand of an exclusive union",
                ));
                Vec::new()
            }
            AlgebraKind::Ref(name) => {
                if self.stack.contains(name) {
                    // Cycles are reported by the reference pass.
                    return Vec::new();
                }
                let Some(p) = self.program.policy(name) else {
                    return Vec::new();
                };
                self.stack.push(name.clone());
                let out = self.leaves(&p.expr);
                self.stack.pop();
                out
            }
            AlgebraKind::Sequential(l, r) => {
                let mut out = self.leaves(l);
                out.extend(self.leaves(r));
                out
            }
            AlgebraKind::ExclusiveUnion(..) => self.union(e),
        }
    }

    fn union(&mut self, e: &AlgebraExpr) -> Vec<CompiledLeaf> {
        let mut operands = Vec::new();
        flatten_union(e, &mut operands);

        let mut default: Option<(usize, &AlgebraExpr)> = None;
        let mut groups: Vec<(usize, Vec<CompiledLeaf>)> = Vec::new();
        for (i, op) in operands.iter().enumerate() {
            if let AlgebraKind::Default { .. } = op.kind {
                if default.is_some() {
                    self.diagnostics.push(Diagnostic::error(
                        codes::MISPLACED_DEFAULT,
                        op.span.clone(),
                        "an exclusive union may contain at most one DEFAULT operand",
                    ));
                } else {
                    default = Some((i, op));
                }
                continue;
            }
            groups.push((i, self.leaves(op)));
        }

        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                self.certify_operands(&groups[a].1, &groups[b].1, operands[groups[b].0]);
            }
        }

        let mut slots: Vec<(usize, Vec<CompiledLeaf>)> = groups.clone();
        if let Some((pos, op)) = default {
            let AlgebraKind::Default { action } = &op.kind else {
                unreachable!()
            };
            let others: Vec<Condition> = groups
                .iter()
                .flat_map(|(_, ls)| ls.iter().map(|l| l.condition.clone()))
                .collect();
            if let Some(any) = or_all(others) {
                slots.push((
                    pos,
                    vec![CompiledLeaf {
                        condition: Condition::not(any),
                        action: action.clone(),
                        span: op.span.clone(),
                    }],
                ));
            }
        }
        slots.sort_by_key(|(pos, _)| *pos);
        slots.into_iter().flat_map(|(_, ls)| ls).collect()
    }

    fn certify_operands(&mut self, left: &[CompiledLeaf], right: &[CompiledLeaf], at: &AlgebraExpr) {
        let fire = |ls: &[CompiledLeaf]| -> Vec<Condition> {
            (0..ls.len())
                .map(|k| {
                    let earlier: Vec<&Condition> = ls[..k].iter().map(|l| &l.condition).collect();
                    guarded(&ls[k].condition, &earlier)
                })
                .collect()
        };
        let (fl, fr) = (fire(left), fire(right));
        for (i, x) in fl.iter().enumerate() {
            for (j, y) in fr.iter().enumerate() {
                let lname = printer::condition(&left[i].condition);
                let rname = printer::condition(&right[j].condition);
                match certify_disjoint(x, y, self.program, self.embedder) {
                    Ok(certificate) => self.certificates.push(CertifiedPair {
                        policy: self.policy.clone(),
                        left: lname,
                        right: rname,
                        certificate,
                    }),
                    Err(CertifyError::Uncertified(reason)) => self.diagnostics.push(Diagnostic::error(
                        codes::CANNOT_CERTIFY,
                        at.span.clone(),
                        format!("cannot certify disjointness of `{lname}` and `{rname}` in exclusive union: {reason}"),
                    )),
                    Err(CertifyError::Incomplete(e)) => self.diagnostics.push(Diagnostic::error(
                        codes::ANALYSIS_INCOMPLETE,
                        at.span.clone(),
                        format!("disjointness of `{lname}` and `{rname}` not checked: {e}"),
                    )),
                }
            }
        }
    }
}

fn flatten_union<'e>(e: &'e AlgebraExpr, out: &mut Vec<&'e AlgebraExpr>) {
    match &e.kind {
        AlgebraKind::ExclusiveUnion(l, r) => {
            flatten_union(l, out);
            flatten_union(r, out);
        }
        _ => out.push(e),
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompiledPolicy {
    pub routes: Vec<RouteDecl>,
    pub certificates: Vec<CertifiedPair>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Compile one policy to routes `<policy>_<j>` in first-match order.
pub fn compile_policy(policy: &PolicyDecl, program: &Program, embedder: &dyn Embedder<f64>) -> CompiledPolicy {
    let mut c = AlgebraCompiler {
        program,
        embedder,
        policy: policy.name.clone(),
        stack: vec![policy.name.clone()],
        diagnostics: Vec::new(),
        certificates: Vec::new(),
    };
    let leaves = c.leaves(&policy.expr);
    let n = leaves.len() as u64;
    let routes = leaves
        .into_iter()
        .enumerate()
        .map(|(j, l)| RouteDecl {
            name: format!("{}_{}", policy.name, j + 1),
            priority: (n - j as u64) * PRIORITY_STEP,
            tier: None,
            condition: l.condition,
            action: l.action,
            span: l.span,
        })
        .collect();
    CompiledPolicy {
        routes,
        certificates: c.certificates,
        diagnostics: c.diagnostics,
    }
}

/// Policies that no other policy references.
pub fn root_policies(program: &Program) -> Vec<&PolicyDecl> {
    fn refs(e: &AlgebraExpr, out: &mut Vec<String>) {
        match &e.kind {
            AlgebraKind::Ref(n) => out.push(n.clone()),
            AlgebraKind::ExclusiveUnion(l, r) | AlgebraKind::Sequential(l, r) => {
                refs(l, out);
                refs(r, out);
            }
            _ => {}
        }
    }
    let mut referenced = Vec::new();
    for p in &program.policies {
        refs(&p.expr, &mut referenced);
    }
    program
        .policies
        .iter()
        .filter(|p| !referenced.contains(&p.name))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct CompiledConstructs {
    pub routes: Vec<RouteDecl>,
    pub certificates: Vec<CertifiedPair>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Check and compile every tree and every root policy.
pub fn compile_constructs(program: &Program, embedder: &dyn Embedder<f64>) -> CompiledConstructs {
    let mut out = CompiledConstructs::default();
    for t in &program.trees {
        out.diagnostics.extend(check_tree(t, program));
        out.routes.extend(compile_tree(t));
    }
    for p in root_policies(program) {
        let c = compile_policy(p, program, embedder);
        out.routes.extend(c.routes);
        out.certificates.extend(c.certificates);
        out.diagnostics.extend(c.diagnostics);
    }
    out
}

/// `program` with compiled tree and policy routes appended to its routes.
pub fn effective_program(program: &Program, embedder: &dyn Embedder<f64>) -> Result<Program, Vec<Diagnostic>> {
    let c = compile_constructs(program, embedder);
    if crate::diagnostic::has_errors(&c.diagnostics) {
        return Err(c.diagnostics);
    }
    let mut p = program.clone();
    p.routes.extend(c.routes);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PseudoEmbedder;

    const TREE: &str = r#"
SIGNAL jailbreak detector { }
SIGNAL domain math { mmlu_categories: ["college_mathematics"] }
SIGNAL domain science { mmlu_categories: ["college_physics"] }
DECISION_TREE routing_policy {
  IF jailbreak("detector") { MODEL "fast-reject" }
  ELSE IF domain("math") AND domain("science") { MODEL "qwen-physics" }
  ELSE IF domain("math") { MODEL "qwen-math" }
  ELSE IF domain("science") { MODEL "qwen-science" }
  ELSE { MODEL "qwen-default" }
}
"#;

    fn emb() -> PseudoEmbedder {
        PseudoEmbedder::default()
    }

    #[test]
    fn example_tree_is_clean_and_disjoint() {
        let p = parse(TREE).unwrap();
        assert!(check_tree(&p.trees[0], &p).is_empty());
        let routes = compile_tree(&p.trees[0]);
        assert_eq!(routes.len(), 5);
        assert_eq!(
            routes.iter().map(|r| r.priority).collect::<Vec<_>>(),
            vec![40, 30, 20, 10, 0]
        );
        for i in 0..routes.len() {
            for j in i + 1..routes.len() {
                let (a, b) = (&routes[i].condition, &routes[j].condition);
                let u = AtomUniverse::from_conditions([a, b]).unwrap();
                assert!(!boolean::jointly_satisfiable(&[a, b], &u).unwrap());
            }
        }
    }

    #[test]
    fn missing_else_and_unreachable_branch() {
        let p = parse(&TREE.replace(r#"ELSE { MODEL "qwen-default" }"#, "")).unwrap();
        let d = check_tree(&p.trees[0], &p);
        assert_eq!(d.iter().map(|d| d.code).collect::<Vec<_>>(), vec!["PP701"]);

        let src = r#"
SIGNAL keyword a { terms: ["a"] }
SIGNAL keyword b { terms: ["b"] }
DECISION_TREE t {
  IF keyword("a") { MODEL "m1" }
  ELSE IF keyword("a") AND keyword("b") { MODEL "m2" }
  ELSE { MODEL "m3" }
}"#;
        let p = parse(src).unwrap();
        let d = check_tree(&p.trees[0], &p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "PP702");
        assert!(d[0].message.contains("branch 2"));
    }

    #[test]
    fn two_branch_tree_compiles_to_complements() {
        let p = parse(
            r#"SIGNAL keyword a { terms: ["a"] }
DECISION_TREE t { IF keyword("a") { MODEL "m1" } ELSE { MODEL "m2" } }"#,
        )
        .unwrap();
        let r = compile_tree(&p.trees[0]);
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].priority, r[1].priority), (10, 0));
        assert_eq!(printer::condition(&r[1].condition), r#"NOT keyword("a")"#);
    }

    #[test]
    fn certification_tiers() {
        let p = parse(
            r#"SIGNAL keyword a { terms: ["a"] }
SIGNAL embedding x { candidates: ["alpha"] threshold: 0.9 }
SIGNAL embedding y { candidates: ["omega"] threshold: 0.9 }
SIGNAL domain m { }
SIGNAL domain s { }"#,
        )
        .unwrap();
        let a = Condition::atom(SignalType::Keyword, "a");
        let c = certify_disjoint(&a, &Condition::not(a.clone()), &p, &emb()).unwrap();
        assert_eq!(c.method, CertificateMethod::SatUnsat);

        let x = Condition::atom(SignalType::Embedding, "x");
        let y = Condition::atom(SignalType::Embedding, "y");
        let c = certify_disjoint(&x, &y, &p, &emb()).unwrap();
        assert_eq!(c.method, CertificateMethod::CapsDisjoint);
        let c2 = certify_disjoint(&y, &x, &p, &emb()).unwrap();
        assert_eq!(c2.method, c.method);

        let m = Condition::atom(SignalType::Domain, "m");
        let s = Condition::atom(SignalType::Domain, "s");
        assert!(matches!(
            certify_disjoint(&m, &s, &p, &emb()),
            Err(CertifyError::Uncertified(_))
        ));
    }

    #[test]
    fn union_needs_certificate_and_default_is_complement() {
        let src = r#"
SIGNAL domain math { }
SIGNAL domain science { }
POLICY domain_policy {
  domain("math") -> "qwen-math"
  (+) domain("science") -> "qwen-science"
  (+) DEFAULT -> "qwen-default"
}"#;
        let p = parse(src).unwrap();
        let c = compile_policy(&p.policies[0], &p, &emb());
        assert_eq!(c.diagnostics.len(), 1);
        assert_eq!(c.diagnostics[0].code, "PP801");

        let grouped = format!(
            "{src}\nSIGNAL_GROUP g {{ semantics: softmax_exclusive temperature: 0.1 members: [math, science] default: science }}"
        );
        let p = parse(&grouped).unwrap();
        let c = compile_policy(&p.policies[0], &p, &emb());
        assert!(c.diagnostics.is_empty(), "{:?}", c.diagnostics);
        assert_eq!(c.certificates[0].certificate.method, CertificateMethod::GroupExclusive);
        assert_eq!(c.routes.len(), 3);
        assert_eq!(
            printer::condition(&c.routes[2].condition),
            r#"NOT (domain("math") OR domain("science"))"#
        );
    }

    #[test]
    fn sequential_orders_priorities() {
        let src = r#"
SIGNAL keyword a { terms: ["a"] }
SIGNAL keyword b { terms: ["b"] }
POLICY first { keyword("a") -> "m1" }
POLICY whole { first >> keyword("b") -> "m2" }"#;
        let p = parse(src).unwrap();
        let roots = root_policies(&p);
        assert_eq!(roots.len(), 1);
        let c = compile_policy(roots[0], &p, &emb());
        assert_eq!(c.routes.len(), 2);
        assert!(c.routes[0].priority > c.routes[1].priority);
        assert_eq!(c.routes[0].action, Action::Model("m1".into()));
    }

    #[test]
    fn stray_default_is_rejected() {
        let p = parse(r#"POLICY p { DEFAULT -> "m" }"#).unwrap();
        let c = compile_policy(&p.policies[0], &p, &emb());
        assert_eq!(c.diagnostics[0].code, "PP802");
    }
}
