//! Plain-text score table and route trace for `probpol explain`.

use std::fmt::Write;

use probpol_core::engine::RoutingDecision;
use probpol_core::Program;

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn render(program: &Program, d: &RoutingDecision) -> String {
    let s = &d.scores;
    let mut out = String::new();
    let name_w = program.signals.iter().map(|x| x.name.len()).max().unwrap_or(0).max(6);
    let group_w = program.groups.iter().map(|g| g.name.len()).max().unwrap_or(0).max(5);
    let _ = writeln!(
        out,
        "{:<name_w$}  {:<10}  {:<group_w$}  {:>10}  {:>7}  {:>10}  active",
        "signal", "type", "group", "similarity", "raw", "normalized"
    );
    for sig in &program.signals {
        let n = &sig.name;
        let group = program.group_of(n).map_or("-", |g| g.name.as_str());
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<10}  {:<group_w$}  {:>10}  {:>7}  {:>10}  {}",
            n,
            sig.signal_type.as_str(),
            group,
            cell(s.similarity.get(n).copied()),
            cell(s.raw.get(n).copied()),
            cell(s.normalized.get(n).copied()),
            if s.is_active(n) { "yes" } else { "no" }
        );
    }
    for g in &program.groups {
        let total: f64 = g.members.iter().filter_map(|m| s.normalized.get(m)).sum();
        let _ = writeln!(out, "group {}: normalized sum {total:.4}", g.name);
    }

    let _ = writeln!(out, "\ntrace:");
    let route_w = d.trace.iter().map(|t| t.route.len()).max().unwrap_or(0);
    for t in &d.trace {
        let rank = match t.tier {
            Some(tier) => format!("tier {tier} priority {}", t.priority),
            None => format!("priority {}", t.priority),
        };
        let reason = serde_json::to_value(t.reason)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  {:<route_w$}  {rank:<20}  {:<7}  confidence {:.4}  {reason}",
            t.route,
            if t.matched { "matched" } else { "-" },
            t.confidence
        );
    }
    match (&d.route, &d.action) {
        (Some(r), Some(a)) => {
            let _ = writeln!(out, "\nselected: {r} -> {a}");
        }
        _ => {
            let _ = writeln!(out, "\nselected: none");
        }
    }
    out
}
