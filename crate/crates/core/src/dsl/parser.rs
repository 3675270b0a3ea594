//! Recursive-descent parser for `.srdsl` sources.
//!
//! ```text
//! program   := block*
//! block     := signal | route | group | test | tree | policy | global | opaque
//! signal    := "SIGNAL" type ident map
//! route     := "ROUTE" ident "{" route_item* "}"
//! route_item:= "PRIORITY" int | "TIER" int | "WHEN" expr | action
//! action    := "MODEL" string | "PLUGIN" ident map? | "BLOCK"
//! group     := "SIGNAL_GROUP" ident map        (typed keys)
//! test      := "TEST" ident "{" (string "->" ident)* "}"
//! tree      := "DECISION_TREE" ident "{" "IF" expr "{" action "}"
//!              ("ELSE" "IF" expr "{" action "}")* ("ELSE" "{" action "}")? "}"
//! policy    := "POLICY" ident "{" alg "}"
//! alg       := union (">>" union)*
//! union     := primary ("(+)" primary)*
//! primary   := expr "->" target | "DEFAULT" "->" target | ident | "(" alg ")"
//! target    := string | "BLOCK" | "PLUGIN" ident map?
//! global    := "GLOBAL" map
//! opaque    := ("BACKEND" | "PLUGIN") ident map
//! map       := "{" (ident ":" value ","?)* "}"
//! value     := string | number | ident | "[" (value ","?)* "]" | map
//! expr      := and ("OR" and)*
//! and       := unary ("AND" unary)*
//! unary     := "NOT" unary | atom | "(" expr ")"
//! atom      := type "(" string ")"
//! ```

#![allow(clippy::result_large_err)] // a Diagnostic aborts the parse; the cold path may be large

use crate::diagnostic::{codes, Diagnostic, Span};
use crate::dsl::ast::*;
use crate::dsl::lexer::{tokenize, Tok, Token};

/// Parse `source`. On failure the returned list holds at least one `PP001`.
pub fn parse(source: &str) -> Result<Program, Vec<Diagnostic>> {
    parse_file(source, "<input>")
}

/// Parse `source`, attributing spans to `file`.
pub fn parse_file(source: &str, file: &str) -> Result<Program, Vec<Diagnostic>> {
    let tokens = tokenize(source, file).map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0 };
    p.program().map_err(|d| vec![d])
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

const BLOCK_KEYWORDS: &[&str] = &[
    "SIGNAL",
    "ROUTE",
    "SIGNAL_GROUP",
    "TEST",
    "DECISION_TREE",
    "POLICY",
    "GLOBAL",
    "BACKEND",
    "PLUGIN",
];

fn syntax(span: &Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(codes::SYNTAX, span.clone(), msg)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.peek().tok
    }

    fn peek_nth(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span.clone()
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek_tok(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek_tok() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let t = self.peek();
        syntax(&t.span, format!("expected {expected}, found {}", t.tok.describe()))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Span> {
        if self.peek_tok() == &tok {
            Ok(self.advance().span)
        } else {
            Err(self.unexpected(what))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek_tok().clone() {
            Tok::Ident(s) => {
                let span = self.advance().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn string(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek_tok().clone() {
            Tok::Str(s) => {
                let span = self.advance().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// Opening brace of a block body.
    fn open_block(&mut self, block: &str) -> PResult<()> {
        self.expect(Tok::LBrace, &format!("'{{' to open {block}")).map(|_| ())
    }

    /// Called when a block body meets end of input.
    fn check_unterminated(&self, block: &str) -> PResult<()> {
        if self.peek_tok() == &Tok::Eof {
            Err(syntax(
                &self.peek().span,
                format!("unterminated block {block}: expected '}}' before end of input"),
            ))
        } else {
            Ok(())
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        while self.peek_tok() != &Tok::Eof {
            let (kw, kw_span) = match self.peek_tok().clone() {
                Tok::Ident(s) => (s, self.peek().span.clone()),
                _ => return Err(self.unexpected("a block keyword")),
            };
            match kw.as_str() {
                "SIGNAL" => {
                    let s = self.signal()?;
                    prog.signals.push(s);
                }
                "ROUTE" => {
                    let r = self.route()?;
                    prog.routes.push(r);
                }
                "SIGNAL_GROUP" => {
                    let g = self.group()?;
                    prog.groups.push(g);
                }
                "TEST" => {
                    let t = self.test()?;
                    prog.tests.push(t);
                }
                "DECISION_TREE" => {
                    let t = self.tree()?;
                    prog.trees.push(t);
                }
                "POLICY" => {
                    let p = self.policy()?;
                    prog.policies.push(p);
                }
                "GLOBAL" => {
                    self.advance();
                    let (map, body) = self.map("GLOBAL")?;
                    let span = kw_span.to(&body);
                    prog.global.extend(map);
                    prog.global_span = Some(match prog.global_span.take() {
                        Some(prev) => prev,
                        None => span,
                    });
                }
                "BACKEND" | "PLUGIN" => {
                    self.advance();
                    let kind = if kw == "BACKEND" {
                        OpaqueKind::Backend
                    } else {
                        OpaqueKind::Plugin
                    };
                    let (name, _) = self.ident(&format!("a {kw} name"))?;
                    let (config, body) = self.map(&format!("{kw} {name}"))?;
                    prog.opaque.push(OpaqueBlock {
                        kind,
                        name,
                        config,
                        span: kw_span.to(&body),
                    });
                }
                other => {
                    return Err(syntax(
                        &kw_span,
                        format!(
                            "unknown block keyword '{other}' (expected one of {})",
                            BLOCK_KEYWORDS.join(", ")
                        ),
                    ))
                }
            }
        }
        Ok(prog)
    }

    fn signal_type(&mut self) -> PResult<(SignalType, Span)> {
        let (name, span) = self.ident("a signal type")?;
        match name.parse::<SignalType>() {
            Ok(t) => Ok((t, span)),
            Err(()) => Err(syntax(
                &span,
                format!(
                    "unknown signal type '{name}' (expected one of {})",
                    SignalType::ALL.map(SignalType::as_str).join(", ")
                ),
            )),
        }
    }

    fn signal(&mut self) -> PResult<SignalDecl> {
        let start = self.advance().span;
        let (signal_type, _) = self.signal_type()?;
        let (name, _) = self.ident("a signal name")?;
        let (config, body) = self.map(&format!("SIGNAL {name}"))?;
        Ok(SignalDecl {
            name,
            signal_type,
            config,
            span: start.to(&body),
        })
    }

    /// `{ key: value ... }`; returns the map and the span of the braces.
    fn map(&mut self, block: &str) -> PResult<(ConfigMap, Span)> {
        let open = self.expect(Tok::LBrace, &format!("'{{' to open {block}"))?;
        let mut map = ConfigMap::new();
        loop {
            self.check_unterminated(block)?;
            if self.peek_tok() == &Tok::RBrace {
                break;
            }
            let (key, key_span) = self.ident("a field name")?;
            self.expect(Tok::Colon, &format!("':' after field '{key}'"))?;
            let value = self.value(block)?;
            if map.insert(key.clone(), value).is_some() {
                return Err(syntax(&key_span, format!("duplicate field '{key}' in {block}")));
            }
            self.eat(&Tok::Comma);
        }
        let close = self.advance().span;
        Ok((map, open.to(&close)))
    }

    fn value(&mut self, block: &str) -> PResult<Value> {
        match self.peek_tok().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(Value::Str(s))
            }
            Tok::Num(n) => {
                self.advance();
                Ok(Value::Num(n))
            }
            Tok::Ident(s) => {
                self.advance();
                Ok(match s.as_str() {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => Value::Ident(s),
                })
            }
            Tok::LBracket => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    self.check_unterminated(block)?;
                    if self.eat(&Tok::RBracket) {
                        break;
                    }
                    items.push(self.value(block)?);
                    if !self.eat(&Tok::Comma) && self.peek_tok() != &Tok::RBracket {
                        return Err(self.unexpected("',' or ']' in list"));
                    }
                }
                Ok(Value::List(items))
            }
            Tok::LBrace => Ok(Value::Map(self.map(block)?.0)),
            _ => Err(self.unexpected("a value")),
        }
    }

    fn integer(&mut self, field: &str) -> PResult<u64> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(n) if !t.fractional && n >= 0.0 && n <= u64::MAX as f64 => {
                self.advance();
                Ok(n as u64)
            }
            _ => Err(syntax(
                &t.span,
                format!("{field} must be a non-negative integer, found {}", t.tok.describe()),
            )),
        }
    }

    fn route(&mut self) -> PResult<RouteDecl> {
        let start = self.advance().span;
        let (name, name_span) = self.ident("a route name")?;
        let block = format!("ROUTE {name}");
        self.open_block(&block)?;
        let mut priority = None;
        let mut tier = None;
        let mut condition = None;
        let mut action = None;
        loop {
            self.check_unterminated(&block)?;
            if self.peek_tok() == &Tok::RBrace {
                break;
            }
            let field_span = self.peek().span.clone();
            let dup = |what: &str| syntax(&field_span, format!("duplicate {what} in {block}"));
            if self.eat_kw("PRIORITY") {
                if priority.is_some() {
                    return Err(dup("PRIORITY"));
                }
                priority = Some(self.integer("PRIORITY")?);
            } else if self.eat_kw("TIER") {
                if tier.is_some() {
                    return Err(dup("TIER"));
                }
                tier = Some(self.integer("TIER")?);
            } else if self.eat_kw("WHEN") {
                if condition.is_some() {
                    return Err(dup("WHEN"));
                }
                condition = Some(self.expr()?);
            } else if let Some(a) = self.action()? {
                if action.is_some() {
                    return Err(dup("action"));
                }
                action = Some(a);
            } else {
                return Err(self.unexpected(&format!("PRIORITY, TIER, WHEN, MODEL, PLUGIN or BLOCK in {block}")));
            }
        }
        let close = self.advance().span;
        let missing = |what: &str| syntax(&name_span, format!("{block} is missing {what}"));
        Ok(RouteDecl {
            priority: priority.ok_or_else(|| missing("PRIORITY"))?,
            tier,
            condition: condition.ok_or_else(|| missing("a WHEN clause"))?,
            action: action.ok_or_else(|| missing("an action (MODEL, PLUGIN or BLOCK)"))?,
            name,
            span: start.to(&close),
        })
    }

    /// `MODEL "m"`, `PLUGIN name {..}?` or `BLOCK`; `None` if the next token
    /// starts none of them.
    fn action(&mut self) -> PResult<Option<Action>> {
        if self.eat_kw("MODEL") {
            let (m, _) = self.string("a model name string after MODEL")?;
            Ok(Some(Action::Model(m)))
        } else if self.eat_kw("PLUGIN") {
            Ok(Some(self.plugin_rest()?))
        } else if self.eat_kw("BLOCK") {
            Ok(Some(Action::Block))
        } else {
            Ok(None)
        }
    }

    fn plugin_rest(&mut self) -> PResult<Action> {
        let (name, _) = self.ident("a plugin name")?;
        let config = if self.peek_tok() == &Tok::LBrace {
            self.map(&format!("PLUGIN {name}"))?.0
        } else {
            ConfigMap::new()
        };
        Ok(Action::Plugin { name, config })
    }

    fn group(&mut self) -> PResult<SignalGroupDecl> {
        let start = self.advance().span;
        let (name, name_span) = self.ident("a group name")?;
        let block = format!("SIGNAL_GROUP {name}");
        let (map, body) = self.map(&block)?;
        let span = start.to(&body);
        let err = |msg: String| syntax(&name_span, msg);

        let mut semantics = None;
        let mut temperature = None;
        let mut members = None;
        let mut default = None;
        let mut threshold = None;
        for (key, value) in map {
            match key.as_str() {
                "semantics" => match value.as_str() {
                    Some("softmax_exclusive") => semantics = Some(GroupSemantics::SoftmaxExclusive),
                    _ => {
                        return Err(err(format!(
                            "{block}: unsupported semantics (expected softmax_exclusive)"
                        )))
                    }
                },
                "temperature" => {
                    temperature = Some(
                        value
                            .as_f64()
                            .ok_or_else(|| err(format!("{block}: temperature must be a number")))?,
                    )
                }
                "threshold" => {
                    threshold = Some(
                        value
                            .as_f64()
                            .ok_or_else(|| err(format!("{block}: threshold must be a number")))?,
                    )
                }
                "members" => {
                    members = Some(
                        value
                            .as_str_list()
                            .ok_or_else(|| err(format!("{block}: members must be a list of names")))?
                            .into_iter()
                            .map(String::from)
                            .collect(),
                    )
                }
                "default" => {
                    default = Some(
                        value
                            .as_str()
                            .ok_or_else(|| err(format!("{block}: default must be a signal name")))?
                            .to_string(),
                    )
                }
                other => return Err(err(format!("{block}: unknown field '{other}'"))),
            }
        }
        Ok(SignalGroupDecl {
            semantics: semantics.ok_or_else(|| err(format!("{block} is missing 'semantics'")))?,
            temperature: temperature.ok_or_else(|| err(format!("{block} is missing 'temperature'")))?,
            members: members.ok_or_else(|| err(format!("{block} is missing 'members'")))?,
            default,
            threshold,
            name,
            span,
        })
    }

    fn test(&mut self) -> PResult<TestDecl> {
        let start = self.advance().span;
        let (name, name_span) = self.ident("a test name")?;
        let block = format!("TEST {name}");
        self.open_block(&block)?;
        let mut cases = Vec::new();
        loop {
            self.check_unterminated(&block)?;
            if self.peek_tok() == &Tok::RBrace {
                break;
            }
            let (query, qspan) = self.string("a query string")?;
            self.expect(Tok::Arrow, "'->' after test query")?;
            let (expected_route, rspan) = self.ident("an expected route name")?;
            self.eat(&Tok::Comma);
            cases.push(TestCase {
                query,
                expected_route,
                span: qspan.to(&rspan),
            });
        }
        let close = self.advance().span;
        if cases.is_empty() {
            return Err(syntax(&name_span, format!("{block} has no cases")));
        }
        Ok(TestDecl {
            name,
            cases,
            span: start.to(&close),
        })
    }

    fn braced_action(&mut self, block: &str) -> PResult<Action> {
        self.open_block(block)?;
        self.check_unterminated(block)?;
        let action = self
            .action()?
            .ok_or_else(|| self.unexpected("MODEL, PLUGIN or BLOCK"))?;
        self.check_unterminated(block)?;
        self.expect(Tok::RBrace, "'}' after branch action")?;
        Ok(action)
    }

    fn tree(&mut self) -> PResult<DecisionTreeDecl> {
        let start = self.advance().span;
        let (name, _) = self.ident("a decision tree name")?;
        let block = format!("DECISION_TREE {name}");
        self.open_block(&block)?;
        let mut branches = Vec::new();
        let mut else_action = None;

        self.check_unterminated(&block)?;
        let if_span = self.peek().span.clone();
        if !self.eat_kw("IF") {
            return Err(self.unexpected(&format!("IF to start {block}")));
        }
        let condition = self.expr()?;
        let action = self.braced_action(&block)?;
        branches.push(Branch {
            condition,
            action,
            span: if_span.to(&self.prev_span()),
        });
        loop {
            self.check_unterminated(&block)?;
            if self.peek_tok() == &Tok::RBrace {
                break;
            }
            let else_span = self.peek().span.clone();
            if !self.eat_kw("ELSE") {
                return Err(self.unexpected(&format!("ELSE or '}}' in {block}")));
            }
            if self.eat_kw("IF") {
                let condition = self.expr()?;
                let action = self.braced_action(&block)?;
                branches.push(Branch {
                    condition,
                    action,
                    span: else_span.to(&self.prev_span()),
                });
            } else {
                else_action = Some(self.braced_action(&block)?);
                self.check_unterminated(&block)?;
                if self.peek_tok() != &Tok::RBrace {
                    return Err(self.unexpected(&format!("'}}' after the final ELSE of {block}")));
                }
            }
        }
        let close = self.advance().span;
        Ok(DecisionTreeDecl {
            name,
            branches,
            else_action,
            span: start.to(&close),
        })
    }

    fn policy(&mut self) -> PResult<PolicyDecl> {
        let start = self.advance().span;
        let (name, _) = self.ident("a policy name")?;
        let block = format!("POLICY {name}");
        self.open_block(&block)?;
        self.check_unterminated(&block)?;
        let expr = self.alg_seq()?;
        self.check_unterminated(&block)?;
        let close = self.expect(Tok::RBrace, &format!("'}}' to close {block}"))?;
        Ok(PolicyDecl {
            name,
            expr,
            span: start.to(&close),
        })
    }

    fn alg_seq(&mut self) -> PResult<AlgebraExpr> {
        let mut lhs = self.alg_union()?;
        while self.peek_tok() == &Tok::Seq {
            self.advance();
            let rhs = self.alg_union()?;
            let span = lhs.span.to(&rhs.span);
            lhs = AlgebraExpr {
                kind: AlgebraKind::Sequential(Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn alg_union(&mut self) -> PResult<AlgebraExpr> {
        let mut lhs = self.alg_primary()?;
        while self.peek_tok() == &Tok::Union {
            self.advance();
            let rhs = self.alg_primary()?;
            let span = lhs.span.to(&rhs.span);
            lhs = AlgebraExpr {
                kind: AlgebraKind::ExclusiveUnion(Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn alg_target(&mut self) -> PResult<Action> {
        match self.peek_tok().clone() {
            Tok::Str(m) => {
                self.advance();
                Ok(Action::Model(m))
            }
            _ if self.eat_kw("BLOCK") => Ok(Action::Block),
            _ if self.eat_kw("PLUGIN") => self.plugin_rest(),
            _ => Err(self.unexpected("a model string, BLOCK or PLUGIN after '->'")),
        }
    }

    fn alg_primary(&mut self) -> PResult<AlgebraExpr> {
        let start = self.peek().span.clone();
        if self.is_kw("DEFAULT") && self.peek_nth(1) == &Tok::Arrow {
            self.advance();
            self.advance();
            let action = self.alg_target()?;
            return Ok(AlgebraExpr {
                kind: AlgebraKind::Default { action },
                span: start.to(&self.prev_span()),
            });
        }
        if let Tok::Ident(name) = self.peek_tok().clone() {
            if name.parse::<SignalType>().is_err() && name != "NOT" {
                self.advance();
                return Ok(AlgebraExpr {
                    kind: AlgebraKind::Ref(name),
                    span: start,
                });
            }
        }
        if self.peek_tok() == &Tok::LParen {
            // Either a parenthesised condition starting a leaf, or a
            // parenthesised algebra expression.
            let save = self.pos;
            if let Ok(leaf) = self.alg_leaf(&start) {
                return Ok(leaf);
            }
            self.pos = save;
            self.advance();
            let mut inner = self.alg_seq()?;
            let close = self.expect(Tok::RParen, "')' to close policy expression")?;
            inner.span = start.to(&close);
            return Ok(inner);
        }
        self.alg_leaf(&start)
    }

    fn alg_leaf(&mut self, start: &Span) -> PResult<AlgebraExpr> {
        let condition = self.expr()?;
        self.expect(Tok::Arrow, "'->' after policy condition")?;
        let action = self.alg_target()?;
        Ok(AlgebraExpr {
            kind: AlgebraKind::Leaf { condition, action },
            span: start.to(&self.prev_span()),
        })
    }

    // ---- WHEN expressions ----

    fn expr(&mut self) -> PResult<Condition> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("OR") {
            let op = self.advance();
            let rhs = self.operand_after(&op, Self::and_expr)?;
            lhs = Condition::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Condition> {
        let mut lhs = self.unary()?;
        while self.is_kw("AND") {
            let op = self.advance();
            let rhs = self.operand_after(&op, Self::unary)?;
            lhs = Condition::and(lhs, rhs);
        }
        Ok(lhs)
    }

    /// Parse the right operand of a binary/unary operator, reporting a
    /// dangling operator at the operator itself.
    fn operand_after(&mut self, op: &Token, f: fn(&mut Self) -> PResult<Condition>) -> PResult<Condition> {
        if !self.starts_operand() {
            let name = match &op.tok {
                Tok::Ident(s) => s.clone(),
                t => t.describe(),
            };
            return Err(syntax(
                &op.span,
                format!(
                    "malformed WHEN expression: dangling '{name}' has no operand (found {})",
                    self.peek_tok().describe()
                ),
            ));
        }
        f(self)
    }

    fn starts_operand(&self) -> bool {
        match self.peek_tok() {
            Tok::LParen => true,
            Tok::Ident(s) => s == "NOT" || s.parse::<SignalType>().is_ok(),
            _ => false,
        }
    }

    fn unary(&mut self) -> PResult<Condition> {
        if self.is_kw("NOT") {
            let op = self.advance();
            let inner = self.operand_after(&op, Self::unary)?;
            let span = op.span.to(&inner.span);
            return Ok(Condition {
                kind: CondKind::Not(Box::new(inner)),
                span,
            });
        }
        if self.peek_tok() == &Tok::LParen {
            let open = self.advance();
            if !self.starts_operand() {
                return Err(syntax(
                    &self.peek().span,
                    format!(
                        "malformed WHEN expression: expected a condition after '(', found {}",
                        self.peek_tok().describe()
                    ),
                ));
            }
            let mut inner = self.expr()?;
            let close = self.expect(Tok::RParen, "')' to close WHEN sub-expression")?;
            // Parentheses produce no node; widen the span to include them.
            inner.span = open.span.to(&close);
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Condition> {
        let t = self.peek().clone();
        let Tok::Ident(word) = &t.tok else {
            return Err(syntax(
                &t.span,
                format!(
                    "malformed WHEN expression: expected a signal reference like domain(\"math\"), found {}",
                    t.tok.describe()
                ),
            ));
        };
        if word.parse::<SignalType>().is_err() {
            return Err(syntax(
                &t.span,
                format!("malformed WHEN expression: '{word}' is not a signal type"),
            ));
        }
        let (signal_type, start) = self.signal_type()?;
        self.expect(Tok::LParen, "'(' after signal type")?;
        let (name, _) = self.string("a quoted signal name")?;
        let close = self.expect(Tok::RParen, "')' after signal name")?;
        let span = start.to(&close);
        Ok(Condition {
            kind: CondKind::Atom(Atom {
                signal_type,
                name,
                span: span.clone(),
            }),
            span,
        })
    }
}
