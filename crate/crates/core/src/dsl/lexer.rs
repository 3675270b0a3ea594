#![allow(clippy::result_large_err)] // a Diagnostic aborts the parse; the cold path may be large

use std::sync::Arc;

use crate::diagnostic::{codes, Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Colon,
    Comma,
    Arrow,
    /// `(+)`
    Union,
    /// `>>`
    Seq,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(n) => format!("number {n}"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Colon => "':'".into(),
            Tok::Comma => "','".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Union => "'(+)'".into(),
            Tok::Seq => "'>>'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// Whether a numeric literal had a fractional part.
    pub fractional: bool,
}

struct Lexer<'s> {
    src: &'s str,
    file: Arc<str>,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'s> Lexer<'s> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: usize, line: u32, col: u32) -> Span {
        Span {
            file: self.file.clone(),
            line,
            column: col,
            offset: start,
            len: self.pos - start,
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, Diagnostic> {
        self.skip_trivia();
        let (start, line, col) = (self.pos, self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok(Token {
                tok: Tok::Eof,
                span: self.span_from(start, line, col),
                fractional: false,
            });
        };
        let mut fractional = false;
        let tok = match c {
            '{' => self.single(Tok::LBrace),
            '}' => self.single(Tok::RBrace),
            '[' => self.single(Tok::LBracket),
            ']' => self.single(Tok::RBracket),
            ')' => self.single(Tok::RParen),
            ':' => self.single(Tok::Colon),
            ',' => self.single(Tok::Comma),
            '(' => {
                if self.peek_at(1) == Some('+') && self.peek_at(2) == Some(')') {
                    self.bump();
                    self.bump();
                    self.bump();
                    Tok::Union
                } else {
                    self.single(Tok::LParen)
                }
            }
            '>' if self.peek_at(1) == Some('>') => {
                self.bump();
                self.bump();
                Tok::Seq
            }
            '-' if self.peek_at(1) == Some('>') => {
                self.bump();
                self.bump();
                Tok::Arrow
            }
            '"' => Tok::Str(self.string(start, line, col)?),
            c if c.is_ascii_digit() || (c == '-' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                let (n, frac) = self.number(start, line, col)?;
                fractional = frac;
                Tok::Num(n)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            other => {
                self.bump();
                return Err(Diagnostic::error(
                    codes::SYNTAX,
                    self.span_from(start, line, col),
                    format!("unexpected character {other:?}"),
                ));
            }
        };
        Ok(Token {
            tok,
            span: self.span_from(start, line, col),
            fractional,
        })
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn string(&mut self, start: usize, line: u32, col: u32) -> Result<String, Diagnostic> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(Diagnostic::error(
                        codes::SYNTAX,
                        self.span_from(start, line, col),
                        "unterminated string literal",
                    ))
                }
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => out.push(c),
                    other => {
                        return Err(Diagnostic::error(
                            codes::SYNTAX,
                            self.span_from(start, line, col),
                            format!(
                                "unsupported escape sequence '\\{}' (only \\\" and \\\\ are allowed)",
                                other.map(String::from).unwrap_or_default()
                            ),
                        ))
                    }
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self, start: usize, line: u32, col: u32) -> Result<(f64, bool), Diagnostic> {
        if self.peek() == Some('-') {
            self.bump();
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let mut fractional = false;
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            fractional = true;
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.bump();
            }
            return Err(Diagnostic::error(
                codes::SYNTAX,
                self.span_from(start, line, col),
                format!("malformed number '{}'", &self.src[start..self.pos]),
            ));
        }
        let text = &self.src[start..self.pos];
        let n = text.parse::<f64>().map_err(|_| {
            Diagnostic::error(
                codes::SYNTAX,
                self.span_from(start, line, col),
                format!("malformed number '{text}'"),
            )
        })?;
        Ok((n, fractional))
    }
}

/// Tokenize `src`. The last token is always `Tok::Eof`.
pub fn tokenize(src: &str, file: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut lx = Lexer {
        src,
        file: Arc::from(file),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let done = t.tok == Tok::Eof;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
}
