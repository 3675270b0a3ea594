//! The six-way conflict taxonomy and the procedure that decides each kind.
//!
//! | kind | decided by | tier |
//! |------|------------|------|
//! | contradiction, shadowing, redundancy | enumeration over atoms | crisp |
//! | probable conflict | spherical-cap intersection | geometric |
//! | soft shadowing | corpus statistics | distributional |
//! | calibration suspect | nothing; listed for TEST coverage | distributional |
//!
//! Pairwise kinds only consider routes with different actions and distinct
//! rank (see [`precedence_pairs`]).

use std::fmt;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::boolean::{self, AtomKey, AtomUniverse};
use crate::diagnostic::{codes, Diagnostic, Severity};
use crate::dsl::printer;
use crate::dsl::{Program, RouteDecl, SignalKind, SignalType};
use crate::engine::{precedence_pairs, Attributes, Mode, Router};
use crate::geometry::{caps_intersect, CapRelation, Embedder};
use crate::signals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    Contradiction,
    Shadowing,
    Redundancy,
    ProbableConflict,
    SoftShadowing,
    CalibrationSuspect,
}

impl ConflictKind {
    pub const ALL: [ConflictKind; 6] = [
        ConflictKind::Contradiction,
        ConflictKind::Shadowing,
        ConflictKind::Redundancy,
        ConflictKind::ProbableConflict,
        ConflictKind::SoftShadowing,
        ConflictKind::CalibrationSuspect,
    ];

    /// Position in the taxonomy, 1 to 6.
    pub fn ordinal(self) -> usize {
        self as usize + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConflictKind::Contradiction => "contradiction",
            ConflictKind::Shadowing => "shadowing",
            ConflictKind::Redundancy => "redundancy",
            ConflictKind::ProbableConflict => "probable_conflict",
            ConflictKind::SoftShadowing => "soft_shadowing",
            ConflictKind::CalibrationSuspect => "calibration_suspect",
        }
    }

    pub fn severity(self) -> Severity {
        match self.ordinal() {
            1..=3 => Severity::Error,
            4 | 5 => Severity::Warning,
            _ => Severity::Info,
        }
    }
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidabilityTier {
    Crisp,
    Geometric,
    Distributional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Subject {
    Route { route: String },
    RoutePair { higher: String, lower: String },
    SignalPair { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    /// No assignment of the listed atoms satisfies the condition.
    Unsat {
        atoms: Vec<String>,
        assignments: u64,
    },
    /// `from` implies `to`.
    Implication {
        from: String,
        to: String,
    },
    Equivalence {
        atoms: Vec<String>,
        assignments: u64,
    },
    CapPair {
        first: String,
        second: String,
        separation: f64,
        radius_sum: f64,
        margin: f64,
    },
    CorpusStats {
        co_fire_rate: f64,
        inversion_rate: f64,
        co_fires: usize,
        sample_count: usize,
    },
    BoundaryPair {
        first: String,
        second: String,
        signal_type: SignalType,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictReport {
    pub kind: ConflictKind,
    pub subject: Subject,
    pub evidence: Evidence,
    pub tier: DecidabilityTier,
    pub note: Option<String>,
}

impl ConflictReport {
    pub fn severity(&self) -> Severity {
        self.kind.severity()
    }

    pub fn routes(&self) -> Vec<&str> {
        match &self.subject {
            Subject::Route { route } => vec![route],
            Subject::RoutePair { higher, lower } => vec![higher, lower],
            Subject::SignalPair { .. } => Vec::new(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": self.kind,
            "ordinal": self.kind.ordinal(),
            "severity": self.severity(),
            "routes": self.routes(),
            "subject": self.subject,
            "tier": self.tier,
            "evidence": self.evidence,
            "note": self.note,
        })
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let who = match &self.subject {
            Subject::Route { route } => format!("route `{route}`"),
            Subject::RoutePair { higher, lower } => format!("`{higher}` over `{lower}`"),
            Subject::SignalPair { first, second } => format!("signals `{first}` and `{second}`"),
        };
        let what = match &self.evidence {
            Evidence::Unsat { assignments, .. } => {
                format!("condition is unsatisfiable ({assignments} assignments checked)")
            }
            Evidence::Implication { from, to } => {
                format!("`{from}` implies `{to}`, so `{from}` never wins")
            }
            Evidence::Equivalence { .. } => "conditions are equivalent".to_string(),
            Evidence::CapPair {
                first,
                second,
                margin,
                ..
            } => format!("caps of {first} and {second} intersect (margin {margin:.4} rad)"),
            Evidence::CorpusStats {
                co_fire_rate,
                inversion_rate,
                co_fires,
                sample_count,
            } => format!(
                "both fire on {co_fires}/{sample_count} queries (rate {co_fire_rate:.3}); lower route is more confident on {:.1}% of them",
                inversion_rate * 100.0
            ),
            Evidence::BoundaryPair { signal_type, .. } => format!(
                "ungrouped {signal_type} classifiers may co-activate near their boundary; cover it with TEST cases"
            ),
        };
        format!("{who}: {what}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConflictAnalysis {
    pub reports: Vec<ConflictReport>,
    /// Analysis gaps such as enumeration overflow.
    pub diagnostics: Vec<Diagnostic>,
}

impl ConflictAnalysis {
    fn extend(&mut self, other: ConflictAnalysis) {
        self.reports.extend(other.reports);
        self.diagnostics.extend(other.diagnostics);
    }

    /// Reports ordered by taxonomy position, stable within a kind.
    pub fn sorted(mut self) -> Self {
        self.reports.sort_by_key(|r| r.kind);
        self
    }

    pub fn has_errors(&self) -> bool {
        self.reports.iter().any(|r| r.severity() == Severity::Error) || crate::diagnostic::has_errors(&self.diagnostics)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConflictError {
    #[error("soft-shadowing analysis needs a non-empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftShadowingOptions {
    pub min_co_fires: usize,
    pub min_inversion_rate: f64,
}

impl Default for SoftShadowingOptions {
    fn default() -> Self {
        SoftShadowingOptions {
            min_co_fires: 5,
            min_inversion_rate: 0.2,
        }
    }
}

fn keys(u: &AtomUniverse) -> Vec<String> {
    u.atoms().iter().map(AtomKey::to_string).collect()
}

fn has_classifier(routes: &[&RouteDecl], program: &Program) -> bool {
    routes.iter().any(|r| {
        r.condition
            .atoms()
            .iter()
            .any(|a| program.signal(&a.name).map_or(a.signal_type, |s| s.signal_type).kind() == SignalKind::Classifier)
    })
}

const CLASSIFIER_NOTE: &str = "classifier atoms were treated as opaque Booleans; co-activation is not modelled";

fn incomplete(r: &RouteDecl, e: boolean::AnalysisError) -> Diagnostic {
    Diagnostic::warning(codes::ANALYSIS_INCOMPLETE, r.span.clone(), e.to_string())
}

/// Contradiction, shadowing and redundancy over `program.routes`.
pub fn analyze_structural(program: &Program) -> ConflictAnalysis {
    let mut out = ConflictAnalysis::default();
    let routes = &program.routes;
    let mut contradictory = vec![false; routes.len()];

    for (i, r) in routes.iter().enumerate() {
        let u = match AtomUniverse::from_conditions([&r.condition]) {
            Ok(u) => u.with_groups(program),
            Err(e) => {
                out.diagnostics.push(incomplete(r, e));
                continue;
            }
        };
        match boolean::satisfiable(&r.condition, &u) {
            Ok(false) => {
                contradictory[i] = true;
                out.reports.push(ConflictReport {
                    kind: ConflictKind::Contradiction,
                    subject: Subject::Route { route: r.name.clone() },
                    evidence: Evidence::Unsat {
                        atoms: keys(&u),
                        assignments: u.assignment_count(),
                    },
                    tier: DecidabilityTier::Crisp,
                    note: has_classifier(&[r], program).then(|| CLASSIFIER_NOTE.to_string()),
                });
            }
            Ok(true) => {}
            Err(e) => out.diagnostics.push(incomplete(r, e)),
        }
    }

    for (hi, lo) in precedence_pairs(routes) {
        let (h, l) = (&routes[hi], &routes[lo]);
        if h.action == l.action || contradictory[hi] || contradictory[lo] {
            continue;
        }
        let u = match AtomUniverse::from_conditions([&h.condition, &l.condition]) {
            Ok(u) => u.with_groups(program),
            Err(e) => {
                out.diagnostics.push(incomplete(l, e));
                continue;
            }
        };
        let note = has_classifier(&[h, l], program).then(|| CLASSIFIER_NOTE.to_string());
        let subject = Subject::RoutePair {
            higher: h.name.clone(),
            lower: l.name.clone(),
        };
        let lo_implies_hi = match boolean::implies(&l.condition, &h.condition, &u) {
            Ok(v) => v,
            Err(e) => {
                out.diagnostics.push(incomplete(l, e));
                continue;
            }
        };
        if !lo_implies_hi {
            continue;
        }
        let equivalent = boolean::implies(&h.condition, &l.condition, &u).unwrap_or(false);
        let (kind, evidence) = if equivalent {
            (
                ConflictKind::Redundancy,
                Evidence::Equivalence {
                    atoms: keys(&u),
                    assignments: u.assignment_count(),
                },
            )
        } else {
            (
                ConflictKind::Shadowing,
                Evidence::Implication {
                    from: l.name.clone(),
                    to: h.name.clone(),
                },
            )
        };
        out.reports.push(ConflictReport {
            kind,
            subject,
            evidence,
            tier: DecidabilityTier::Crisp,
            note,
        });
    }
    out
}

/// Probable conflicts between embedding signals whose caps intersect.
///
/// A pair is skipped when both signals share a softmax-exclusive group, or
/// when the two routes cannot hold together with both signals firing.
pub fn analyze_geometric(program: &Program, embedder: &dyn Embedder<f64>) -> ConflictAnalysis {
    let mut out = ConflictAnalysis::default();
    let routes = &program.routes;
    let mut reported_degenerate: Vec<String> = Vec::new();
    for (hi, lo) in precedence_pairs(routes) {
        let (h, l) = (&routes[hi], &routes[lo]);
        if h.action == l.action {
            continue;
        }
        fn emb<'p>(program: &Program, r: &'p RouteDecl) -> Vec<&'p crate::dsl::Atom> {
            let mut v: Vec<_> = r
                .condition
                .positive_atoms()
                .into_iter()
                .filter(|a| {
                    program
                        .signal(&a.name)
                        .is_some_and(|s| s.signal_type == SignalType::Embedding)
                })
                .collect();
            v.dedup_by(|a, b| a.name == b.name);
            v
        }
        for a in emb(program, h) {
            for b in emb(program, l) {
                if a.name == b.name || program.exclusive_together(&a.name, &b.name) {
                    continue;
                }
                let (sa, sb) = (program.signal(&a.name).unwrap(), program.signal(&b.name).unwrap());
                let caps = [sa, sb].map(|s| (s, signals::signal_cap(s, embedder)));
                let mut ok = Vec::new();
                for (s, c) in caps {
                    match c {
                        Ok(c) => ok.push(c),
                        Err(e) => {
                            if !reported_degenerate.contains(&s.name) {
                                reported_degenerate.push(s.name.clone());
                                out.diagnostics.push(Diagnostic::error(
                                    codes::DEGENERATE_CENTROID,
                                    s.span.clone(),
                                    format!("signal `{}`: {e}", s.name),
                                ));
                            }
                        }
                    }
                }
                if ok.len() != 2 {
                    continue;
                }
                let joint = [
                    h.condition.clone(),
                    l.condition.clone(),
                    crate::dsl::Condition::atom(a.signal_type, a.name.clone()),
                    crate::dsl::Condition::atom(b.signal_type, b.name.clone()),
                ];
                let refs: Vec<_> = joint.iter().collect();
                let guarded = AtomUniverse::from_conditions(refs.iter().copied())
                    .map(|u| u.with_groups(program))
                    .and_then(|u| boolean::jointly_satisfiable(&refs, &u));
                match guarded {
                    Ok(false) => continue,
                    Ok(true) => {}
                    Err(e) => {
                        out.diagnostics.push(incomplete(l, e));
                        continue;
                    }
                }
                let rel = caps_intersect(&ok[0], &ok[1]);
                if let CapRelation::Intersect { margin } = rel {
                    out.reports.push(ConflictReport {
                        kind: ConflictKind::ProbableConflict,
                        subject: Subject::RoutePair {
                            higher: h.name.clone(),
                            lower: l.name.clone(),
                        },
                        evidence: Evidence::CapPair {
                            first: printer::atom(a),
                            second: printer::atom(b),
                            separation: ok[0].centroid().angle(ok[1].centroid()),
                            radius_sum: ok[0].radius() + ok[1].radius(),
                            margin,
                        },
                        tier: DecidabilityTier::Geometric,
                        note: None,
                    });
                }
            }
        }
    }
    out
}

/// Soft shadowing estimated on `corpus` under independent thresholding.
pub fn analyze_soft_shadowing(
    router: &Router,
    corpus: &[String],
    attrs: &Attributes,
    options: SoftShadowingOptions,
) -> Result<ConflictAnalysis, Box<dyn std::error::Error + Send + Sync>> {
    if corpus.is_empty() {
        return Err(Box::new(ConflictError::EmptyCorpus));
    }
    let router = router.with_mode(Mode::Independent);
    let sim = router.simulate(corpus, attrs)?;
    let routes = &router.program().routes;
    let mut out = ConflictAnalysis::default();
    for inv in &sim.inversions {
        let (Some(h), Some(l)) = (
            routes.iter().find(|r| r.name == inv.higher),
            routes.iter().find(|r| r.name == inv.lower),
        ) else {
            continue;
        };
        if h.action == l.action {
            continue;
        }
        if inv.both_matched >= options.min_co_fires && inv.rate >= options.min_inversion_rate {
            out.reports.push(ConflictReport {
                kind: ConflictKind::SoftShadowing,
                subject: Subject::RoutePair {
                    higher: inv.higher.clone(),
                    lower: inv.lower.clone(),
                },
                evidence: Evidence::CorpusStats {
                    co_fire_rate: inv.both_matched as f64 / sim.queries as f64,
                    inversion_rate: inv.rate,
                    co_fires: inv.both_matched,
                    sample_count: sim.queries,
                },
                tier: DecidabilityTier::Distributional,
                note: None,
            });
        }
    }
    Ok(out)
}

/// Ungrouped classifier pairs of one type. No verdict is attempted.
pub fn analyze_calibration(program: &Program) -> ConflictAnalysis {
    let mut out = ConflictAnalysis::default();
    let cls: Vec<_> = program
        .signals
        .iter()
        .filter(|s| s.signal_type.kind() == SignalKind::Classifier)
        .collect();
    for i in 0..cls.len() {
        for j in i + 1..cls.len() {
            let (a, b) = (cls[i], cls[j]);
            if a.signal_type != b.signal_type || program.exclusive_together(&a.name, &b.name) {
                continue;
            }
            out.reports.push(ConflictReport {
                kind: ConflictKind::CalibrationSuspect,
                subject: Subject::SignalPair {
                    first: a.name.clone(),
                    second: b.name.clone(),
                },
                evidence: Evidence::BoundaryPair {
                    first: a.name.clone(),
                    second: b.name.clone(),
                    signal_type: a.signal_type,
                },
                tier: DecidabilityTier::Distributional,
                note: Some("static analysis cannot decide this; add TEST cases near the boundary".into()),
            });
        }
    }
    out
}

/// Every analysis in taxonomy order. Without a corpus, soft shadowing is
/// skipped and an info diagnostic says so.
pub fn analyze(
    program: &Program,
    router: &Router,
    corpus: Option<&[String]>,
    attrs: &Attributes,
    options: SoftShadowingOptions,
    embedder: &dyn Embedder<f64>,
) -> Result<ConflictAnalysis, Box<dyn std::error::Error + Send + Sync>> {
    let mut out = analyze_structural(program);
    out.extend(analyze_geometric(program, embedder));
    match corpus {
        Some(c) => out.extend(analyze_soft_shadowing(router, c, attrs, options)?),
        None => out.diagnostics.push(Diagnostic::info(
            codes::ANALYSIS_INCOMPLETE,
            crate::diagnostic::Span {
                file: program
                    .routes
                    .first()
                    .map_or_else(|| std::sync::Arc::from(""), |r| r.span.file.clone()),
                ..Default::default()
            },
            "soft-shadowing analysis skipped: no corpus given",
        )),
    }
    out.extend(analyze_calibration(program));
    Ok(out.sorted())
}
