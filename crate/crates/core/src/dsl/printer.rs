//! Canonical pretty-printer. `parse(print(p))` is equivalent to `p`.

use std::fmt::Write;

use crate::dsl::ast::*;

/// Print `program` as canonical DSL source: blocks in declaration order,
/// two-space indent, one field per line.
pub fn print(program: &Program) -> String {
    let mut blocks: Vec<(usize, usize, String)> = Vec::new();
    let mut push = |offset: usize, text: String| {
        let seq = blocks.len();
        blocks.push((offset, seq, text));
    };
    if !program.global.is_empty() {
        let off = program.global_span.as_ref().map_or(0, |s| s.offset);
        push(off, format!("GLOBAL {}", map_block(&program.global, 0)));
    }
    for o in &program.opaque {
        push(
            o.span.offset,
            format!("{} {} {}", o.kind.keyword(), o.name, map_block(&o.config, 0)),
        );
    }
    for s in &program.signals {
        push(
            s.span.offset,
            format!("SIGNAL {} {} {}", s.signal_type, s.name, map_block(&s.config, 0)),
        );
    }
    for g in &program.groups {
        push(g.span.offset, group(g));
    }
    for r in &program.routes {
        push(r.span.offset, route(r));
    }
    for t in &program.trees {
        push(t.span.offset, tree(t));
    }
    for p in &program.policies {
        push(
            p.span.offset,
            format!("POLICY {} {{\n  {}\n}}", p.name, algebra(&p.expr)),
        );
    }
    for t in &program.tests {
        push(t.span.offset, test(t));
    }
    blocks.sort_by_key(|(off, seq, _)| (*off, *seq));
    let mut out = String::new();
    for (i, (_, _, text)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(text);
        out.push('\n');
    }
    out
}

fn indent(level: usize) -> String {
    "  ".repeat(level)
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub(crate) fn number(n: f64) -> String {
    // Rust's Display gives the shortest round-tripping decimal, never an exponent.
    format!("{n}")
}

fn value(v: &Value) -> String {
    match v {
        Value::Str(s) => quote(s),
        Value::Num(n) => number(*n),
        Value::Bool(b) => b.to_string(),
        Value::Ident(s) => s.clone(),
        Value::List(items) => {
            let inner: Vec<String> = items.iter().map(value).collect();
            format!("[{}]", inner.join(", "))
        }
        Value::Map(m) => {
            if m.is_empty() {
                "{}".into()
            } else {
                let inner: Vec<String> = m.iter().map(|(k, v)| format!("{k}: {}", value(v))).collect();
                format!("{{ {} }}", inner.join(", "))
            }
        }
    }
}

/// `{\n  k: v\n}` with the closing brace at `level`.
fn map_block(m: &ConfigMap, level: usize) -> String {
    if m.is_empty() {
        return "{\n}".into();
    }
    let mut out = String::from("{\n");
    for (k, v) in m {
        let _ = writeln!(out, "{}{k}: {}", indent(level + 1), value(v));
    }
    out.push_str(&indent(level));
    out.push('}');
    out
}

fn action(a: &Action, level: usize) -> String {
    match a {
        Action::Model(m) => format!("MODEL {}", quote(m)),
        Action::Block => "BLOCK".into(),
        Action::Plugin { name, config } if config.is_empty() => format!("PLUGIN {name}"),
        Action::Plugin { name, config } => format!("PLUGIN {name} {}", map_block(config, level)),
    }
}

fn route(r: &RouteDecl) -> String {
    let mut out = format!("ROUTE {} {{\n", r.name);
    let _ = writeln!(out, "  PRIORITY {}", r.priority);
    if let Some(t) = r.tier {
        let _ = writeln!(out, "  TIER {t}");
    }
    let _ = writeln!(out, "  WHEN {}", condition(&r.condition));
    let _ = writeln!(out, "  {}", action(&r.action, 1));
    out.push('}');
    out
}

fn group(g: &SignalGroupDecl) -> String {
    let mut out = format!("SIGNAL_GROUP {} {{\n", g.name);
    let _ = writeln!(out, "  semantics: {}", g.semantics.as_str());
    let _ = writeln!(out, "  temperature: {}", number(g.temperature));
    if let Some(t) = g.threshold {
        let _ = writeln!(out, "  threshold: {}", number(t));
    }
    let _ = writeln!(out, "  members: [{}]", g.members.join(", "));
    if let Some(d) = &g.default {
        let _ = writeln!(out, "  default: {d}");
    }
    out.push('}');
    out
}

fn test(t: &TestDecl) -> String {
    let mut out = format!("TEST {} {{\n", t.name);
    for c in &t.cases {
        let _ = writeln!(out, "  {} -> {}", quote(&c.query), c.expected_route);
    }
    out.push('}');
    out
}

fn tree(t: &DecisionTreeDecl) -> String {
    let mut out = format!("DECISION_TREE {} {{\n", t.name);
    for (i, b) in t.branches.iter().enumerate() {
        let kw = if i == 0 { "IF" } else { "ELSE IF" };
        let _ = writeln!(out, "  {kw} {} {{", condition(&b.condition));
        let _ = writeln!(out, "    {}", action(&b.action, 2));
        out.push_str("  }\n");
    }
    if let Some(a) = &t.else_action {
        out.push_str("  ELSE {\n");
        let _ = writeln!(out, "    {}", action(a, 2));
        out.push_str("  }\n");
    }
    out.push('}');
    out
}

/// Render a condition. Binary operands of any operator are parenthesised;
/// atoms and negated atoms never are.
pub fn condition(c: &Condition) -> String {
    match &c.kind {
        CondKind::Atom(a) => atom(a),
        CondKind::Not(inner) => format!("NOT {}", operand(inner)),
        CondKind::And(l, r) => format!("{} AND {}", operand(l), operand(r)),
        CondKind::Or(l, r) => format!("{} OR {}", operand(l), operand(r)),
    }
}

fn operand(c: &Condition) -> String {
    match &c.kind {
        CondKind::And(..) | CondKind::Or(..) => format!("({})", condition(c)),
        _ => condition(c),
    }
}

pub fn atom(a: &Atom) -> String {
    format!("{}({})", a.signal_type, quote(&a.name))
}

fn target(a: &Action) -> String {
    match a {
        Action::Model(m) => quote(m),
        other => action(other, 1),
    }
}

/// Render a policy expression. `>>` binds loosest, then `(+)`; both are
/// left-associative.
pub fn algebra(e: &AlgebraExpr) -> String {
    match &e.kind {
        AlgebraKind::Leaf { condition: c, action } => format!("{} -> {}", condition(c), target(action)),
        AlgebraKind::Default { action } => format!("DEFAULT -> {}", target(action)),
        AlgebraKind::Ref(name) => name.clone(),
        AlgebraKind::ExclusiveUnion(l, r) => {
            let lhs = match l.kind {
                AlgebraKind::Sequential(..) => format!("({})", algebra(l)),
                _ => algebra(l),
            };
            let rhs = match r.kind {
                AlgebraKind::Sequential(..) | AlgebraKind::ExclusiveUnion(..) => format!("({})", algebra(r)),
                _ => algebra(r),
            };
            format!("{lhs}\n  (+) {rhs}")
        }
        AlgebraKind::Sequential(l, r) => {
            let rhs = match r.kind {
                AlgebraKind::Sequential(..) => format!("({})", algebra(r)),
                _ => algebra(r),
            };
            format!("{}\n  >> {rhs}", algebra(l))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse;

    #[test]
    fn empty_program_prints_nothing() {
        assert_eq!(print(&Program::default()), "");
    }

    #[test]
    fn and_not_prints_without_parens() {
        let c = Condition::and(
            Condition::atom(SignalType::Domain, "a"),
            Condition::not(Condition::atom(SignalType::Domain, "b")),
        );
        assert_eq!(condition(&c), r#"domain("a") AND NOT domain("b")"#);
    }

    #[test]
    fn nested_binary_operands_are_parenthesised() {
        let a = || Condition::atom(SignalType::Keyword, "a");
        let b = || Condition::atom(SignalType::Keyword, "b");
        let c = Condition::and(Condition::or(a(), b()), Condition::not(Condition::and(a(), b())));
        assert_eq!(
            condition(&c),
            r#"(keyword("a") OR keyword("b")) AND NOT (keyword("a") AND keyword("b"))"#
        );
    }

    #[test]
    fn right_nested_chain_round_trips() {
        let a = || Condition::atom(SignalType::Keyword, "a");
        let c = Condition::and(a(), Condition::and(a(), a()));
        let src = format!("ROUTE r {{ PRIORITY 1 WHEN {} MODEL \"m\" }}", condition(&c));
        let p = parse(&src).unwrap();
        let mut got = p.routes[0].condition.clone();
        clear_cond(&mut got);
        assert_eq!(got, c);
    }

    #[test]
    fn escapes_round_trip() {
        assert_eq!(quote(r#"a "b" \c"#), r#""a \"b\" \\c""#);
    }
}
