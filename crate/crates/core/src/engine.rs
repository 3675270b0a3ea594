//! Desk-scale evaluation: score every signal on a query, normalize groups,
//! threshold to an activation set, then pick a route.
//!
//! Untiered programs use first-match over descending priority. Tiered
//! programs walk tiers in ascending order and, inside a tier, take the
//! matching route with the highest fuzzy confidence (priority, then
//! declaration order, break ties).
//!
//! Soft signals carry two numbers: the similarity `c` in [-1, 1], which the
//! thresholds and the group softmax use, and the display score `(c + 1) / 2`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::constructs;
use crate::diagnostic::Diagnostic;
use crate::dsl::{Action, Atom, Program, RouteDecl, SignalDecl, SignalKind, SignalType, Value};
use crate::geometry::{group_fire, tokenize, voronoi_scores, Embedder, GeometryError, PseudoEmbedder, UnitVector};
use crate::signals;

/// Caller-supplied attributes for authz and context signals.
pub type Attributes = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every signal fires at its own threshold; groups are ignored.
    Independent,
    /// Groups are softmax-normalized before thresholding.
    #[default]
    Voronoi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Independent => "independent",
            Mode::Voronoi => "voronoi",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(Mode::Independent),
            "voronoi" => Ok(Mode::Voronoi),
            other => Err(format!("unknown mode `{other}` (expected independent or voronoi)")),
        }
    }
}

/// Similarity source for classifier signals.
pub trait ScoreProvider: Send + Sync {
    /// Similarity in [-1, 1] of the query to `signal`, or `None` when the
    /// provider does not cover it.
    fn similarity(&self, signal: &SignalDecl, query: &str, embedding: &UnitVector<f64>) -> Option<f64>;
}

/// Default classifier provider: maximum cosine between the query and the
/// embeddings of the signal's category names.
pub struct CategoryProvider {
    categories: HashMap<String, Vec<UnitVector<f64>>>,
}

impl CategoryProvider {
    pub fn new(program: &Program, embedder: &dyn Embedder<f64>) -> Self {
        let categories = program
            .signals
            .iter()
            .filter(|s| s.signal_type.kind() == SignalKind::Classifier)
            .map(|s| {
                let vs = signals::categories(s).iter().map(|c| embedder.embed(c)).collect();
                (s.name.clone(), vs)
            })
            .collect();
        CategoryProvider { categories }
    }
}

impl ScoreProvider for CategoryProvider {
    fn similarity(&self, signal: &SignalDecl, _query: &str, embedding: &UnitVector<f64>) -> Option<f64> {
        self.categories
            .get(&signal.name)?
            .iter()
            .map(|c| c.cosine(embedding))
            .reduce(f64::max)
    }
}

/// Fixed similarities per signal name, whatever the query.
#[derive(Debug, Clone, Default)]
pub struct FixedScores(pub BTreeMap<String, f64>);

impl FixedScores {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        FixedScores(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

impl ScoreProvider for FixedScores {
    fn similarity(&self, signal: &SignalDecl, _query: &str, _e: &UnitVector<f64>) -> Option<f64> {
        self.0.get(&signal.name).copied()
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no score provider covers {signal_type} signal `{name}`")]
    UnresolvedProvider { signal_type: SignalType, name: String },
    #[error("program does not compile ({} error diagnostics)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("signal `{0}`: {1}")]
    Geometry(String, GeometryError),
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    pub embedder: Arc<dyn Embedder<f64>>,
    /// Classifier provider; `None` uses [`CategoryProvider`].
    pub provider: Option<Arc<dyn ScoreProvider>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::default(),
            embedder: Arc::new(PseudoEmbedder::default()),
            provider: None,
        }
    }
}

impl EngineConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_provider(mut self, provider: Arc<dyn ScoreProvider>) -> Self {
        self.provider = Some(provider);
        self
    }
}

/// Scores of every signal on one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalScores {
    /// Display score in [0, 1]; crisp signals give exactly 0 or 1.
    pub raw: BTreeMap<String, f64>,
    /// Similarity in [-1, 1] for soft signals.
    pub similarity: BTreeMap<String, f64>,
    /// Post-softmax score for grouped members; equals `raw` otherwise.
    pub normalized: BTreeMap<String, f64>,
    pub active: BTreeSet<String>,
}

impl SignalScores {
    pub fn is_active(&self, name: &str) -> bool {
        self.active.contains(name)
    }

    /// Score an atom contributes to fuzzy confidence.
    pub fn confidence_of(&self, name: &str) -> f64 {
        self.normalized.get(name).copied().unwrap_or(0.0)
    }

    pub fn truth(&self, atom: &Atom) -> bool {
        self.is_active(&atom.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Selected,
    ConditionFalse,
    /// Matched, but a route earlier in first-match order was selected.
    OutrankedByPriority,
    /// Matched in the selected tier with lower confidence.
    LowerConfidence,
    /// In a tier after the selected one.
    LaterTier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub route: String,
    pub priority: u64,
    pub tier: Option<u64>,
    pub matched: bool,
    pub confidence: f64,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingDecision {
    pub route: Option<String>,
    #[serde(serialize_with = "ser_action")]
    pub action: Option<Action>,
    pub trace: Vec<TraceEntry>,
    pub scores: SignalScores,
}

fn ser_action<S: serde::Serializer>(a: &Option<Action>, s: S) -> Result<S::Ok, S::Error> {
    match a {
        Some(a) => s.serialize_some(&a.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub test: String,
    pub query: String,
    pub expected: String,
    pub actual: Option<String>,
    pub passed: bool,
    pub scores: SignalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryDecision {
    pub query: String,
    pub route: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoFire {
    pub first: String,
    pub second: String,
    pub count: usize,
    pub rate: f64,
    pub same_group: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    pub higher: String,
    pub lower: String,
    pub both_matched: usize,
    pub inversions: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub mode: Mode,
    pub queries: usize,
    pub decisions: Vec<QueryDecision>,
    /// Route name to count; unmatched queries count under `"<none>"`.
    pub histogram: BTreeMap<String, usize>,
    pub co_fire: Vec<CoFire>,
    /// Fraction of queries on which two members of one group both fired.
    pub within_group_co_fire_rate: f64,
    pub inversions: Vec<Inversion>,
}

pub const NO_ROUTE: &str = "<none>";

/// Route pairs `(higher, lower)` where `higher` takes precedence.
///
/// Two tiered routes compare by tier only; otherwise by priority. Equal
/// rank yields no pair.
pub fn precedence_pairs(routes: &[RouteDecl]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..routes.len() {
        for j in 0..routes.len() {
            if i != j && outranks(&routes[i], &routes[j]) {
                out.push((i, j));
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn outranks(a: &RouteDecl, b: &RouteDecl) -> bool {
    match (a.tier, b.tier) {
        (Some(ta), Some(tb)) => ta < tb,
        _ => a.priority > b.priority,
    }
}

fn truthy(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Null => false,
        serde_json::Value::Bool(b) => *b,
        serde_json::Value::Number(n) => n.as_f64().is_some_and(|x| x != 0.0),
        serde_json::Value::String(s) => !s.is_empty(),
        serde_json::Value::Array(a) => !a.is_empty(),
        serde_json::Value::Object(o) => !o.is_empty(),
    }
}

fn value_matches(attr: &serde_json::Value, expected: &Value) -> bool {
    use serde_json::Value as J;
    match (attr, expected) {
        (J::Array(items), _) => items.iter().any(|i| value_matches(i, expected)),
        (J::String(s), Value::Str(e) | Value::Ident(e)) => s == e,
        (J::Number(n), Value::Num(e)) => n.as_f64() == Some(*e),
        (J::Bool(b), Value::Bool(e)) => b == e,
        (_, Value::List(es)) => es.iter().any(|e| value_matches(attr, e)),
        _ => false,
    }
}

fn phrase_match(query_tokens: &[String], phrase: &str) -> bool {
    let p = tokenize(phrase);
    !p.is_empty() && query_tokens.windows(p.len()).any(|w| w == p.as_slice())
}

#[derive(Clone)]
pub struct Router {
    program: Program,
    order: Vec<usize>,
    mode: Mode,
    embedder: Arc<dyn Embedder<f64>>,
    provider: Arc<dyn ScoreProvider>,
    centroids: HashMap<String, UnitVector<f64>>,
    tiered: bool,
}

impl fmt::Debug for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Router")
            .field("routes", &self.program.routes.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl Router {
    /// Build a router over `program`'s routes plus its compiled trees and
    /// policies.
    pub fn new(program: &Program, config: EngineConfig) -> Result<Router, EngineError> {
        let program = constructs::effective_program(program, config.embedder.as_ref())
            .map_err(|d| EngineError::Invalid(d.into_iter().filter(|d| d.is_error()).collect()))?;
        let mut centroids = HashMap::new();
        for s in &program.signals {
            if s.signal_type == SignalType::Embedding {
                let c = signals::signal_centroid(s, config.embedder.as_ref())
                    .map_err(|e| EngineError::Geometry(s.name.clone(), e))?;
                centroids.insert(s.name.clone(), c);
            }
        }
        let provider = config
            .provider
            .clone()
            .unwrap_or_else(|| Arc::new(CategoryProvider::new(&program, config.embedder.as_ref())));
        let tiered = !program.routes.is_empty() && program.routes.iter().all(|r| r.tier.is_some());
        let mut order: Vec<usize> = (0..program.routes.len()).collect();
        let routes = &program.routes;
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&routes[a], &routes[b]);
            let tier = ra.tier.unwrap_or(u64::MAX).cmp(&rb.tier.unwrap_or(u64::MAX));
            let tier = if tiered { tier } else { Ordering::Equal };
            tier.then(rb.priority.cmp(&ra.priority)).then(a.cmp(&b))
        });
        Ok(Router {
            program,
            order,
            mode: config.mode,
            embedder: config.embedder,
            provider,
            centroids,
            tiered,
        })
    }

    /// The program this router evaluates, with compiled routes appended.
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn with_mode(&self, mode: Mode) -> Router {
        Router { mode, ..self.clone() }
    }

    pub fn is_tiered(&self) -> bool {
        self.tiered
    }

    pub fn score(&self, query: &str, attrs: &Attributes) -> Result<SignalScores, EngineError> {
        let tokens = tokenize(query);
        let needs_embedding = self
            .program
            .signals
            .iter()
            .any(|s| s.signal_type.kind() != SignalKind::Crisp);
        let embedding = if needs_embedding {
            self.embedder.embed(query)
        } else {
            UnitVector::basis(2, 0)
        };

        let mut raw = BTreeMap::new();
        let mut similarity = BTreeMap::new();
        let mut active = BTreeSet::new();
        for s in &self.program.signals {
            let (score, fires) = match s.signal_type {
                SignalType::Keyword => {
                    let hit = signals::keywords(s)
                        .unwrap_or_default()
                        .iter()
                        .any(|k| phrase_match(&tokens, k));
                    (if hit { 1.0 } else { 0.0 }, hit)
                }
                SignalType::Authz | SignalType::Context => {
                    let (key, expected) = signals::attribute(s);
                    let hit = match (attrs.get(key), expected) {
                        (None, _) => false,
                        (Some(v), None) => truthy(v),
                        (Some(v), Some(e)) => value_matches(v, e),
                    };
                    (if hit { 1.0 } else { 0.0 }, hit)
                }
                SignalType::Embedding => {
                    let c = self.centroids[&s.name].cosine(&embedding);
                    similarity.insert(s.name.clone(), c);
                    ((c + 1.0) / 2.0, c >= signals::threshold(s))
                }
                _ => {
                    let c = self
                        .provider
                        .similarity(s, query, &embedding)
                        .ok_or_else(|| EngineError::UnresolvedProvider {
                            signal_type: s.signal_type,
                            name: s.name.clone(),
                        })?
                        .clamp(-1.0, 1.0);
                    similarity.insert(s.name.clone(), c);
                    ((c + 1.0) / 2.0, c >= signals::threshold(s))
                }
            };
            raw.insert(s.name.clone(), score);
            if fires {
                active.insert(s.name.clone());
            }
        }

        let mut normalized = raw.clone();
        if self.mode == Mode::Voronoi {
            for g in &self.program.groups {
                let members: Vec<&String> = g.members.iter().filter(|m| similarity.contains_key(*m)).collect();
                if members.is_empty() {
                    continue;
                }
                let sims: Vec<f64> = members.iter().map(|m| similarity[*m]).collect();
                let scores = voronoi_scores(&sims, g.temperature);
                let fired = group_fire(&scores, g.group_threshold());
                for (m, sc) in members.iter().zip(&scores) {
                    normalized.insert((*m).clone(), *sc);
                    active.remove(*m);
                }
                for i in &fired {
                    active.insert(members[*i].clone());
                }
                if fired.is_empty() {
                    if let Some(d) = &g.default {
                        if self.program.signal(d).is_some() {
                            active.insert(d.clone());
                        }
                    }
                }
            }
        }
        Ok(SignalScores {
            raw,
            similarity,
            normalized,
            active,
        })
    }

    /// Pick a route from precomputed scores.
    pub fn select(&self, scores: SignalScores) -> RoutingDecision {
        let routes = &self.program.routes;
        let evals: Vec<(bool, f64)> = routes
            .iter()
            .map(|r| {
                let m = r.condition.eval(&mut |a| scores.truth(a));
                let c = r.condition.confidence(&mut |a| scores.confidence_of(&a.name));
                (m, c)
            })
            .collect();

        let chosen: Option<usize> = if self.tiered {
            let mut pick = None;
            let mut i = 0;
            while i < self.order.len() && pick.is_none() {
                let tier = routes[self.order[i]].tier;
                let mut j = i;
                let mut best: Option<usize> = None;
                while j < self.order.len() && routes[self.order[j]].tier == tier {
                    let k = self.order[j];
                    // `order` is priority-descending within a tier, so only a
                    // strictly higher confidence displaces the incumbent.
                    if evals[k].0 && best.is_none_or(|b| evals[k].1 > evals[b].1) {
                        best = Some(k);
                    }
                    j += 1;
                }
                pick = best;
                i = j;
            }
            pick
        } else {
            self.order.iter().copied().find(|&k| evals[k].0)
        };

        let chosen_tier = chosen.and_then(|c| routes[c].tier);
        let mut seen_chosen = false;
        let trace = self
            .order
            .iter()
            .map(|&k| {
                let r = &routes[k];
                let (matched, confidence) = evals[k];
                let reason = if Some(k) == chosen {
                    seen_chosen = true;
                    Reason::Selected
                } else if self.tiered && chosen.is_some() && r.tier > chosen_tier {
                    Reason::LaterTier
                } else if !matched {
                    Reason::ConditionFalse
                } else if self.tiered {
                    Reason::LowerConfidence
                } else {
                    debug_assert!(seen_chosen);
                    Reason::OutrankedByPriority
                };
                TraceEntry {
                    route: r.name.clone(),
                    priority: r.priority,
                    tier: r.tier,
                    matched,
                    confidence,
                    reason,
                }
            })
            .collect();
        RoutingDecision {
            route: chosen.map(|c| routes[c].name.clone()),
            action: chosen.map(|c| routes[c].action.clone()),
            trace,
            scores,
        }
    }

    pub fn route(&self, query: &str, attrs: &Attributes) -> Result<RoutingDecision, EngineError> {
        Ok(self.select(self.score(query, attrs)?))
    }

    /// Route every TEST case with no attributes.
    pub fn run_tests(&self) -> Result<Vec<TestOutcome>, EngineError> {
        let attrs = Attributes::new();
        let mut out = Vec::new();
        for t in &self.program.tests {
            for c in &t.cases {
                let d = self.route(&c.query, &attrs)?;
                out.push(TestOutcome {
                    test: t.name.clone(),
                    query: c.query.clone(),
                    expected: c.expected_route.clone(),
                    passed: d.route.as_deref() == Some(c.expected_route.as_str()),
                    actual: d.route,
                    scores: d.scores,
                });
            }
        }
        Ok(out)
    }

    pub fn simulate(&self, trace: &[String], attrs: &Attributes) -> Result<Simulation, EngineError> {
        if trace.is_empty() {
            return Err(EngineError::EmptyTrace);
        }
        let signals: Vec<&str> = self.program.signals.iter().map(|s| s.name.as_str()).collect();
        let same_group = |a: &str, b: &str| {
            self.program
                .groups
                .iter()
                .any(|g| g.members.iter().any(|m| m == a) && g.members.iter().any(|m| m == b))
        };
        let pairs = precedence_pairs(&self.program.routes);
        let n = signals.len();
        let mut co = vec![0usize; n * n];
        let mut within = 0usize;
        let mut inv = vec![(0usize, 0usize); pairs.len()];
        let mut histogram = BTreeMap::new();
        let mut decisions = Vec::with_capacity(trace.len());

        for q in trace {
            let d = self.route(q, attrs)?;
            let mut hit_within = false;
            for i in 0..n {
                if !d.scores.is_active(signals[i]) {
                    continue;
                }
                for j in i + 1..n {
                    if d.scores.is_active(signals[j]) {
                        co[i * n + j] += 1;
                        hit_within |= same_group(signals[i], signals[j]);
                    }
                }
            }
            within += usize::from(hit_within);
            let evals: Vec<(bool, f64)> = self
                .program
                .routes
                .iter()
                .map(|r| {
                    (
                        r.condition.eval(&mut |a| d.scores.truth(a)),
                        r.condition.confidence(&mut |a| d.scores.confidence_of(&a.name)),
                    )
                })
                .collect();
            for (p, &(hi, lo)) in pairs.iter().enumerate() {
                if evals[hi].0 && evals[lo].0 {
                    inv[p].0 += 1;
                    if evals[lo].1 > evals[hi].1 {
                        inv[p].1 += 1;
                    }
                }
            }
            *histogram
                .entry(d.route.clone().unwrap_or_else(|| NO_ROUTE.to_string()))
                .or_insert(0) += 1;
            decisions.push(QueryDecision {
                query: q.clone(),
                route: d.route,
            });
        }

        let total = trace.len() as f64;
        let mut co_fire = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let count = co[i * n + j];
                co_fire.push(CoFire {
                    first: signals[i].to_string(),
                    second: signals[j].to_string(),
                    count,
                    rate: count as f64 / total,
                    same_group: same_group(signals[i], signals[j]),
                });
            }
        }
        let routes = &self.program.routes;
        let inversions = pairs
            .iter()
            .zip(&inv)
            .map(|(&(hi, lo), &(both, flips))| Inversion {
                higher: routes[hi].name.clone(),
                lower: routes[lo].name.clone(),
                both_matched: both,
                inversions: flips,
                rate: if both == 0 { 0.0 } else { flips as f64 / both as f64 },
            })
            .collect();
        Ok(Simulation {
            mode: self.mode,
            queries: trace.len(),
            decisions,
            histogram,
            co_fire,
            within_group_co_fire_rate: within as f64 / total,
            inversions,
        })
    }
}
