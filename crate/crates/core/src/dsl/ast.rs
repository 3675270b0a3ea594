//! Typed syntax tree for policy programs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::diagnostic::Span;

/// The signal types the language admits. Anything else is a syntax error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalType {
    Keyword,
    Embedding,
    Domain,
    Complexity,
    Jailbreak,
    Pii,
    Authz,
    Context,
}

/// How a signal type behaves for static analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalKind {
    /// Always exactly 0 or 1.
    Crisp,
    /// Cosine similarity against a centroid; activation set is a spherical cap.
    Geometric,
    /// Opaque soft scorer.
    Classifier,
}

impl SignalType {
    pub const ALL: [SignalType; 8] = [
        SignalType::Keyword,
        SignalType::Embedding,
        SignalType::Domain,
        SignalType::Complexity,
        SignalType::Jailbreak,
        SignalType::Pii,
        SignalType::Authz,
        SignalType::Context,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalType::Keyword => "keyword",
            SignalType::Embedding => "embedding",
            SignalType::Domain => "domain",
            SignalType::Complexity => "complexity",
            SignalType::Jailbreak => "jailbreak",
            SignalType::Pii => "pii",
            SignalType::Authz => "authz",
            SignalType::Context => "context",
        }
    }

    pub fn kind(self) -> SignalKind {
        match self {
            SignalType::Keyword | SignalType::Authz | SignalType::Context => SignalKind::Crisp,
            SignalType::Embedding => SignalKind::Geometric,
            SignalType::Domain | SignalType::Complexity | SignalType::Jailbreak | SignalType::Pii => {
                SignalKind::Classifier
            }
        }
    }
}

impl serde::Serialize for SignalType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl fmt::Display for SignalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignalType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

/// A configuration value inside a block body.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    /// A bare identifier, e.g. `semantics: softmax_exclusive`.
    Ident(String),
    List(Vec<Value>),
    Map(ConfigMap),
}

pub type ConfigMap = BTreeMap<String, Value>;

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Ident(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }

    /// A list whose items are all strings (or identifiers).
    pub fn as_str_list(&self) -> Option<Vec<&str>> {
        match self {
            Value::List(items) => items.iter().map(Value::as_str).collect(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalDecl {
    pub name: String,
    pub signal_type: SignalType,
    pub config: ConfigMap,
    pub span: Span,
}

impl SignalDecl {
    pub fn str_list(&self, key: &str) -> Option<Vec<&str>> {
        self.config.get(key).and_then(Value::as_str_list)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.config.get(key).and_then(Value::as_f64)
    }

    pub fn mmlu_categories(&self) -> Vec<&str> {
        self.str_list("mmlu_categories").unwrap_or_default()
    }
}

/// Signal reference inside a condition: `domain("math")`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub signal_type: SignalType,
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CondKind {
    Atom(Atom),
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub kind: CondKind,
    pub span: Span,
}

impl Condition {
    pub fn atom(signal_type: SignalType, name: impl Into<String>) -> Self {
        Condition {
            kind: CondKind::Atom(Atom {
                signal_type,
                name: name.into(),
                span: Span::default(),
            }),
            span: Span::default(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Condition) -> Self {
        let span = inner.span.clone();
        Condition {
            kind: CondKind::Not(Box::new(inner)),
            span,
        }
    }

    pub fn and(lhs: Condition, rhs: Condition) -> Self {
        let span = lhs.span.to(&rhs.span);
        Condition {
            kind: CondKind::And(Box::new(lhs), Box::new(rhs)),
            span,
        }
    }

    pub fn or(lhs: Condition, rhs: Condition) -> Self {
        let span = lhs.span.to(&rhs.span);
        Condition {
            kind: CondKind::Or(Box::new(lhs), Box::new(rhs)),
            span,
        }
    }

    /// Visit every atom, left to right, with its polarity (`true` = under an
    /// even number of negations).
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Atom, bool)) {
        fn walk<'a>(c: &'a Condition, positive: bool, f: &mut impl FnMut(&'a Atom, bool)) {
            match &c.kind {
                CondKind::Atom(a) => f(a, positive),
                CondKind::Not(inner) => walk(inner, !positive, f),
                CondKind::And(l, r) | CondKind::Or(l, r) => {
                    walk(l, positive, f);
                    walk(r, positive, f);
                }
            }
        }
        walk(self, true, f)
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.for_each_atom(&mut |a, _| out.push(a));
        out
    }

    /// Atoms that occur under no negation at all.
    pub fn positive_atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.for_each_atom(&mut |a, pos| {
            if pos {
                out.push(a)
            }
        });
        out
    }

    /// Whether `NOT t("n")` occurs as a subterm.
    pub fn contains_negated(&self, signal_type: SignalType, name: &str) -> bool {
        match &self.kind {
            CondKind::Atom(_) => false,
            CondKind::Not(inner) => match &inner.kind {
                CondKind::Atom(a) if a.signal_type == signal_type && a.name == name => true,
                _ => inner.contains_negated(signal_type, name),
            },
            CondKind::And(l, r) | CondKind::Or(l, r) => {
                l.contains_negated(signal_type, name) || r.contains_negated(signal_type, name)
            }
        }
    }

    /// Evaluate with a caller-supplied truth value per atom.
    pub fn eval(&self, truth: &mut impl FnMut(&Atom) -> bool) -> bool {
        match &self.kind {
            CondKind::Atom(a) => truth(a),
            CondKind::Not(inner) => !inner.eval(truth),
            CondKind::And(l, r) => l.eval(truth) && r.eval(truth),
            CondKind::Or(l, r) => l.eval(truth) || r.eval(truth),
        }
    }

    /// Fuzzy confidence: atom = score, AND = min, OR = max, NOT = 1 - s.
    pub fn confidence(&self, score: &mut impl FnMut(&Atom) -> f64) -> f64 {
        match &self.kind {
            CondKind::Atom(a) => score(a),
            CondKind::Not(inner) => 1.0 - inner.confidence(score),
            CondKind::And(l, r) => l.confidence(score).min(r.confidence(score)),
            CondKind::Or(l, r) => l.confidence(score).max(r.confidence(score)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Model(String),
    Plugin { name: String, config: ConfigMap },
    Block,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Model(m) => write!(f, "MODEL {m:?}"),
            Action::Plugin { name, .. } => write!(f, "PLUGIN {name}"),
            Action::Block => f.write_str("BLOCK"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteDecl {
    pub name: String,
    pub priority: u64,
    pub tier: Option<u64>,
    pub condition: Condition,
    pub action: Action,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSemantics {
    SoftmaxExclusive,
}

impl GroupSemantics {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupSemantics::SoftmaxExclusive => "softmax_exclusive",
        }
    }
}

/// Default group firing threshold when a `SIGNAL_GROUP` does not declare one.
pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalGroupDecl {
    pub name: String,
    pub semantics: GroupSemantics,
    pub temperature: f64,
    pub members: Vec<String>,
    pub default: Option<String>,
    pub threshold: Option<f64>,
    pub span: Span,
}

impl SignalGroupDecl {
    pub fn group_threshold(&self) -> f64 {
        self.threshold.unwrap_or(DEFAULT_GROUP_THRESHOLD)
    }

    /// Whether at most one member can fire. Scores sum to 1, so two scores
    /// strictly above θ need θ < 1/2; θ > 1/k alone is not enough once k ≥ 3.
    pub fn guarantees_exclusion(&self) -> bool {
        !self.members.is_empty() && self.temperature > 0.0 && self.group_threshold() >= 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub query: String,
    pub expected_route: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDecl {
    pub name: String,
    pub cases: Vec<TestCase>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub condition: Condition,
    pub action: Action,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTreeDecl {
    pub name: String,
    pub branches: Vec<Branch>,
    pub else_action: Option<Action>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraKind {
    /// `cond -> target`
    Leaf { condition: Condition, action: Action },
    /// `DEFAULT -> target`: fires when no sibling in the enclosing union does.
    Default { action: Action },
    /// Reference to another `POLICY` block.
    Ref(String),
    /// `x (+) y`
    ExclusiveUnion(Box<AlgebraExpr>, Box<AlgebraExpr>),
    /// `x >> y`
    Sequential(Box<AlgebraExpr>, Box<AlgebraExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraExpr {
    pub kind: AlgebraKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecl {
    pub name: String,
    pub expr: AlgebraExpr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpaqueKind {
    Backend,
    Plugin,
}

impl OpaqueKind {
    pub fn keyword(self) -> &'static str {
        match self {
            OpaqueKind::Backend => "BACKEND",
            OpaqueKind::Plugin => "PLUGIN",
        }
    }
}

/// `BACKEND` and top-level `PLUGIN` blocks, passed through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct OpaqueBlock {
    pub kind: OpaqueKind,
    pub name: String,
    pub config: ConfigMap,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub signals: Vec<SignalDecl>,
    pub routes: Vec<RouteDecl>,
    pub groups: Vec<SignalGroupDecl>,
    pub tests: Vec<TestDecl>,
    pub trees: Vec<DecisionTreeDecl>,
    pub policies: Vec<PolicyDecl>,
    pub opaque: Vec<OpaqueBlock>,
    pub global: ConfigMap,
    /// Span of the (merged) GLOBAL block, if any.
    pub global_span: Option<Span>,
}

impl Program {
    pub fn signal(&self, name: &str) -> Option<&SignalDecl> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn route(&self, name: &str) -> Option<&RouteDecl> {
        self.routes.iter().find(|r| r.name == name)
    }

    pub fn policy(&self, name: &str) -> Option<&PolicyDecl> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// The first group that lists `signal` as a member.
    pub fn group_of(&self, signal: &str) -> Option<&SignalGroupDecl> {
        self.groups.iter().find(|g| g.members.iter().any(|m| m == signal))
    }

    /// Whether both signals are members of one group that guarantees
    /// at-most-one firing.
    pub fn exclusive_together(&self, a: &str, b: &str) -> bool {
        self.groups
            .iter()
            .any(|g| g.guarantees_exclusion() && g.members.iter().any(|m| m == a) && g.members.iter().any(|m| m == b))
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
            && self.routes.is_empty()
            && self.groups.is_empty()
            && self.tests.is_empty()
            && self.trees.is_empty()
            && self.policies.is_empty()
            && self.opaque.is_empty()
            && self.global.is_empty()
    }

    /// A copy with every span reset to the default.
    pub fn without_spans(&self) -> Program {
        let mut p = self.clone();
        p.clear_spans();
        p
    }

    fn clear_spans(&mut self) {
        for s in &mut self.signals {
            s.span = Span::default();
        }
        for r in &mut self.routes {
            r.span = Span::default();
            clear_cond(&mut r.condition);
        }
        for g in &mut self.groups {
            g.span = Span::default();
        }
        for t in &mut self.tests {
            t.span = Span::default();
            for c in &mut t.cases {
                c.span = Span::default();
            }
        }
        for t in &mut self.trees {
            t.span = Span::default();
            for b in &mut t.branches {
                b.span = Span::default();
                clear_cond(&mut b.condition);
            }
        }
        for p in &mut self.policies {
            p.span = Span::default();
            clear_algebra(&mut p.expr);
        }
        for o in &mut self.opaque {
            o.span = Span::default();
        }
        self.global_span = None;
    }
}

pub(crate) fn clear_cond(c: &mut Condition) {
    c.span = Span::default();
    match &mut c.kind {
        CondKind::Atom(a) => a.span = Span::default(),
        CondKind::Not(inner) => clear_cond(inner),
        CondKind::And(l, r) | CondKind::Or(l, r) => {
            clear_cond(l);
            clear_cond(r);
        }
    }
}

fn clear_algebra(e: &mut AlgebraExpr) {
    e.span = Span::default();
    match &mut e.kind {
        AlgebraKind::Leaf { condition, .. } => clear_cond(condition),
        AlgebraKind::Default { .. } | AlgebraKind::Ref(_) => {}
        AlgebraKind::ExclusiveUnion(l, r) | AlgebraKind::Sequential(l, r) => {
            clear_algebra(l);
            clear_algebra(r);
        }
    }
}

/// AST equality ignoring spans. Config maps compare as maps.
pub fn equivalent(a: &Program, b: &Program) -> bool {
    a.without_spans() == b.without_spans()
}
