//! Flat JSON config documents: emit from a program, decompile back.
//!
//! Key order is fixed by the struct definitions and config maps are sorted,
//! so identical programs give byte-identical documents. Conditions are
//! prefix trees: `{"op": "and", "args": [...]}` with atoms
//! `{"type": "domain", "name": "math"}`. Bare identifiers inside config maps
//! are written as `{"$ident": "name"}` to keep them distinct from strings.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diagnostic::{has_errors, Diagnostic, Span};
use crate::dsl::*;
use crate::geometry::{Embedder, PseudoEmbedder, DEFAULT_WARN_COSINE};
use crate::validator;

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub version: u32,
    pub signals: Vec<SignalDoc>,
    pub routes: Vec<RouteDoc>,
    pub groups: Vec<GroupDoc>,
    pub tests: Vec<TestDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trees: Vec<TreeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<PolicyDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub global: BTreeMap<String, ValueDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backends: Vec<OpaqueDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plugins: Vec<OpaqueDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalDoc {
    pub name: String,
    #[serde(rename = "type")]
    pub signal_type: TypeDoc,
    pub config: BTreeMap<String, ValueDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDoc {
    pub name: String,
    pub priority: u64,
    pub tier: Option<u64>,
    pub condition: ConditionDoc,
    pub action: ActionDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDoc {
    pub name: String,
    pub semantics: SemanticsDoc,
    pub temperature: f64,
    pub members: Vec<String>,
    pub default: Option<String>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticsDoc {
    SoftmaxExclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDoc {
    pub name: String,
    pub cases: Vec<CaseDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDoc {
    pub query: String,
    pub expected_route: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub name: String,
    pub branches: Vec<BranchDoc>,
    pub else_action: Option<ActionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub condition: ConditionDoc,
    pub action: ActionDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub name: String,
    pub expr: AlgebraDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpaqueDoc {
    pub name: String,
    pub config: BTreeMap<String, ValueDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeDoc(pub SignalType);

impl Serialize for TypeDoc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for TypeDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map(TypeDoc)
            .map_err(|_| D::Error::custom(format!("unknown signal type `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionDoc {
    Atom {
        #[serde(rename = "type")]
        signal_type: TypeDoc,
        name: String,
    },
    Op {
        op: OpDoc,
        args: Vec<ConditionDoc>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpDoc {
    Not,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionDoc {
    Model {
        model: String,
    },
    Plugin {
        name: String,
        config: BTreeMap<String, ValueDoc>,
    },
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgebraDoc {
    Leaf { condition: ConditionDoc, action: ActionDoc },
    Default { action: ActionDoc },
    Ref { policy: String },
    ExclusiveUnion { args: Vec<AlgebraDoc> },
    Sequential { args: Vec<AlgebraDoc> },
}

/// A config value; identifiers are `{"$ident": name}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDoc(pub Value);

const IDENT_KEY: &str = "$ident";

fn value_to_json(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        Value::Str(s) => J::String(s.clone()),
        Value::Num(n) => serde_json::Number::from_f64(*n).map_or(J::Null, J::Number),
        Value::Bool(b) => J::Bool(*b),
        Value::Ident(i) => serde_json::json!({ IDENT_KEY: i }),
        Value::List(items) => J::Array(items.iter().map(value_to_json).collect()),
        Value::Map(m) => J::Object(m.iter().map(|(k, v)| (k.clone(), value_to_json(v))).collect()),
    }
}

fn value_from_json(j: serde_json::Value) -> Result<Value, String> {
    use serde_json::Value as J;
    Ok(match j {
        J::Null => return Err("null is not a config value".into()),
        J::Bool(b) => Value::Bool(b),
        J::Number(n) => Value::Num(n.as_f64().ok_or("number out of range")?),
        J::String(s) => Value::Str(s),
        J::Array(a) => Value::List(a.into_iter().map(value_from_json).collect::<Result<_, _>>()?),
        J::Object(o) => {
            if o.len() == 1 {
                if let Some(J::String(i)) = o.get(IDENT_KEY) {
                    return Ok(Value::Ident(i.clone()));
                }
            }
            Value::Map(
                o.into_iter()
                    .map(|(k, v)| Ok((k, value_from_json(v)?)))
                    .collect::<Result<_, String>>()?,
            )
        }
    })
}

impl Serialize for ValueDoc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        value_to_json(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValueDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = serde_json::Value::deserialize(d)?;
        value_from_json(j).map(ValueDoc).map_err(D::Error::custom)
    }
}

// ---- AST to document ----

fn map_doc(m: &ConfigMap) -> BTreeMap<String, ValueDoc> {
    m.iter().map(|(k, v)| (k.clone(), ValueDoc(v.clone()))).collect()
}

fn cond_doc(c: &Condition) -> ConditionDoc {
    match &c.kind {
        CondKind::Atom(a) => ConditionDoc::Atom {
            signal_type: TypeDoc(a.signal_type),
            name: a.name.clone(),
        },
        CondKind::Not(i) => ConditionDoc::Op {
            op: OpDoc::Not,
            args: vec![cond_doc(i)],
        },
        CondKind::And(l, r) => ConditionDoc::Op {
            op: OpDoc::And,
            args: vec![cond_doc(l), cond_doc(r)],
        },
        CondKind::Or(l, r) => ConditionDoc::Op {
            op: OpDoc::Or,
            args: vec![cond_doc(l), cond_doc(r)],
        },
    }
}

fn action_doc(a: &Action) -> ActionDoc {
    match a {
        Action::Model(m) => ActionDoc::Model { model: m.clone() },
        Action::Plugin { name, config } => ActionDoc::Plugin {
            name: name.clone(),
            config: map_doc(config),
        },
        Action::Block => ActionDoc::Block,
    }
}

fn algebra_doc(e: &AlgebraExpr) -> AlgebraDoc {
    match &e.kind {
        AlgebraKind::Leaf { condition, action } => AlgebraDoc::Leaf {
            condition: cond_doc(condition),
            action: action_doc(action),
        },
        AlgebraKind::Default { action } => AlgebraDoc::Default {
            action: action_doc(action),
        },
        AlgebraKind::Ref(n) => AlgebraDoc::Ref { policy: n.clone() },
        AlgebraKind::ExclusiveUnion(l, r) => AlgebraDoc::ExclusiveUnion {
            args: vec![algebra_doc(l), algebra_doc(r)],
        },
        AlgebraKind::Sequential(l, r) => AlgebraDoc::Sequential {
            args: vec![algebra_doc(l), algebra_doc(r)],
        },
    }
}

/// Document for `program` without validating it.
pub fn to_doc(program: &Program) -> ConfigDoc {
    let opaque = |kind: OpaqueKind| {
        program
            .opaque
            .iter()
            .filter(|o| o.kind == kind)
            .map(|o| OpaqueDoc {
                name: o.name.clone(),
                config: map_doc(&o.config),
            })
            .collect()
    };
    ConfigDoc {
        version: VERSION,
        signals: program
            .signals
            .iter()
            .map(|s| SignalDoc {
                name: s.name.clone(),
                signal_type: TypeDoc(s.signal_type),
                config: map_doc(&s.config),
            })
            .collect(),
        routes: program
            .routes
            .iter()
            .map(|r| RouteDoc {
                name: r.name.clone(),
                priority: r.priority,
                tier: r.tier,
                condition: cond_doc(&r.condition),
                action: action_doc(&r.action),
            })
            .collect(),
        groups: program
            .groups
            .iter()
            .map(|g| GroupDoc {
                name: g.name.clone(),
                semantics: SemanticsDoc::SoftmaxExclusive,
                temperature: g.temperature,
                members: g.members.clone(),
                default: g.default.clone(),
                threshold: g.threshold,
            })
            .collect(),
        tests: program
            .tests
            .iter()
            .map(|t| TestDoc {
                name: t.name.clone(),
                cases: t
                    .cases
                    .iter()
                    .map(|c| CaseDoc {
                        query: c.query.clone(),
                        expected_route: c.expected_route.clone(),
                    })
                    .collect(),
            })
            .collect(),
        trees: program
            .trees
            .iter()
            .map(|t| TreeDoc {
                name: t.name.clone(),
                branches: t
                    .branches
                    .iter()
                    .map(|b| BranchDoc {
                        condition: cond_doc(&b.condition),
                        action: action_doc(&b.action),
                    })
                    .collect(),
                else_action: t.else_action.as_ref().map(action_doc),
            })
            .collect(),
        policies: program
            .policies
            .iter()
            .map(|p| PolicyDoc {
                name: p.name.clone(),
                expr: algebra_doc(&p.expr),
            })
            .collect(),
        global: map_doc(&program.global),
        backends: opaque(OpaqueKind::Backend),
        plugins: opaque(OpaqueKind::Plugin),
    }
}

/// Validate, then emit. Validation errors refuse the compile.
pub fn compile(program: &Program) -> Result<ConfigDoc, Vec<Diagnostic>> {
    compile_with(program, &PseudoEmbedder::default())
}

pub fn compile_with(program: &Program, embedder: &dyn Embedder<f64>) -> Result<ConfigDoc, Vec<Diagnostic>> {
    let diags = validator::validate_with(
        program,
        &validator::ValidateOptions {
            embedder,
            warn_cosine: DEFAULT_WARN_COSINE,
        },
    );
    if has_errors(&diags) {
        return Err(diags.into_iter().filter(Diagnostic::is_error).collect());
    }
    Ok(to_doc(program))
}

/// Canonical text: two-space indent, trailing newline.
pub fn to_json_string(doc: &ConfigDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("config documents always serialize");
    s.push('\n');
    s
}

// ---- document to AST ----

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pointer}: {message}")]
pub struct DecompileError {
    /// JSON pointer to the offending value; empty for the whole document.
    pub pointer: String,
    pub message: String,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let part = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&part);
    }
    out
}

fn err(pointer: impl Into<String>, message: impl Into<String>) -> DecompileError {
    DecompileError {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn map_ast(m: &BTreeMap<String, ValueDoc>) -> ConfigMap {
    m.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect()
}

fn cond_ast(c: &ConditionDoc, at: &str) -> Result<Condition, DecompileError> {
    match c {
        ConditionDoc::Atom { signal_type, name } => Ok(Condition::atom(signal_type.0, name.clone())),
        ConditionDoc::Op { op, args } => {
            let want = if *op == OpDoc::Not { 1 } else { 2 };
            if args.len() != want {
                return Err(err(
                    format!("{at}/args"),
                    format!("`{op:?}` takes {want} argument(s), got {}", args.len()).to_lowercase(),
                ));
            }
            let a = |i: usize| cond_ast(&args[i], &format!("{at}/args/{i}"));
            Ok(match op {
                OpDoc::Not => Condition::not(a(0)?),
                OpDoc::And => Condition::and(a(0)?, a(1)?),
                OpDoc::Or => Condition::or(a(0)?, a(1)?),
            })
        }
    }
}

fn action_ast(a: &ActionDoc) -> Action {
    match a {
        ActionDoc::Model { model } => Action::Model(model.clone()),
        ActionDoc::Plugin { name, config } => Action::Plugin {
            name: name.clone(),
            config: map_ast(config),
        },
        ActionDoc::Block => Action::Block,
    }
}

fn algebra_ast(e: &AlgebraDoc, at: &str) -> Result<AlgebraExpr, DecompileError> {
    let kind = match e {
        AlgebraDoc::Leaf { condition, action } => AlgebraKind::Leaf {
            condition: cond_ast(condition, &format!("{at}/condition"))?,
            action: action_ast(action),
        },
        AlgebraDoc::Default { action } => AlgebraKind::Default {
            action: action_ast(action),
        },
        AlgebraDoc::Ref { policy } => AlgebraKind::Ref(policy.clone()),
        AlgebraDoc::ExclusiveUnion { args } | AlgebraDoc::Sequential { args } => {
            if args.len() != 2 {
                return Err(err(
                    format!("{at}/args"),
                    format!("expected 2 operands, got {}", args.len()),
                ));
            }
            let l = Box::new(algebra_ast(&args[0], &format!("{at}/args/0"))?);
            let r = Box::new(algebra_ast(&args[1], &format!("{at}/args/1"))?);
            match e {
                AlgebraDoc::ExclusiveUnion { .. } => AlgebraKind::ExclusiveUnion(l, r),
                _ => AlgebraKind::Sequential(l, r),
            }
        }
    };
    Ok(AlgebraExpr {
        kind,
        span: Span::default(),
    })
}

/// Program for a parsed document.
pub fn from_doc(doc: &ConfigDoc) -> Result<Program, DecompileError> {
    if doc.version != VERSION {
        return Err(err(
            "/version",
            format!("unsupported version {} (expected {VERSION})", doc.version),
        ));
    }
    let mut p = Program::default();
    for s in &doc.signals {
        p.signals.push(SignalDecl {
            name: s.name.clone(),
            signal_type: s.signal_type.0,
            config: map_ast(&s.config),
            span: Span::default(),
        });
    }
    for (i, r) in doc.routes.iter().enumerate() {
        p.routes.push(RouteDecl {
            name: r.name.clone(),
            priority: r.priority,
            tier: r.tier,
            condition: cond_ast(&r.condition, &format!("/routes/{i}/condition"))?,
            action: action_ast(&r.action),
            span: Span::default(),
        });
    }
    for (i, g) in doc.groups.iter().enumerate() {
        if !g.temperature.is_finite() {
            return Err(err(format!("/groups/{i}/temperature"), "temperature must be finite"));
        }
        p.groups.push(SignalGroupDecl {
            name: g.name.clone(),
            semantics: GroupSemantics::SoftmaxExclusive,
            temperature: g.temperature,
            members: g.members.clone(),
            default: g.default.clone(),
            threshold: g.threshold,
            span: Span::default(),
        });
    }
    for t in &doc.tests {
        p.tests.push(TestDecl {
            name: t.name.clone(),
            cases: t
                .cases
                .iter()
                .map(|c| TestCase {
                    query: c.query.clone(),
                    expected_route: c.expected_route.clone(),
                    span: Span::default(),
                })
                .collect(),
            span: Span::default(),
        });
    }
    for (i, t) in doc.trees.iter().enumerate() {
        let mut branches = Vec::new();
        for (j, b) in t.branches.iter().enumerate() {
            branches.push(Branch {
                condition: cond_ast(&b.condition, &format!("/trees/{i}/branches/{j}/condition"))?,
                action: action_ast(&b.action),
                span: Span::default(),
            });
        }
        if branches.is_empty() {
            return Err(err(format!("/trees/{i}/branches"), "a tree needs at least one branch"));
        }
        p.trees.push(DecisionTreeDecl {
            name: t.name.clone(),
            branches,
            else_action: t.else_action.as_ref().map(action_ast),
            span: Span::default(),
        });
    }
    for (i, pol) in doc.policies.iter().enumerate() {
        p.policies.push(PolicyDecl {
            name: pol.name.clone(),
            expr: algebra_ast(&pol.expr, &format!("/policies/{i}/expr"))?,
            span: Span::default(),
        });
    }
    p.global = map_ast(&doc.global);
    for (kind, list) in [(OpaqueKind::Backend, &doc.backends), (OpaqueKind::Plugin, &doc.plugins)] {
        for o in list {
            p.opaque.push(OpaqueBlock {
                kind,
                name: o.name.clone(),
                config: map_ast(&o.config),
                span: Span::default(),
            });
        }
    }
    Ok(p)
}

/// Parse a JSON document and rebuild the program. Errors carry a JSON
/// pointer to the offending value.
pub fn decompile(json: &str) -> Result<Program, DecompileError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let doc: ConfigDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        err(pointer, e.into_inner().to_string())
    })?;
    from_doc(&doc)
}
