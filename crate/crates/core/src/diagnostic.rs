//! Source positions and the diagnostic record shared by every pass.
//!
//! Diagnostic codes are stable strings. The catalog lives in [`codes`] and is
//! mirrored in `docs/diagnostics.md`; editor tooling and tests assert on them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

/// A region of a source file.
///
/// `line` and `column` are 1-based and refer to the first byte of the region.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
    pub offset: usize,
    pub len: usize,
}

impl Default for Span {
    fn default() -> Self {
        Span {
            file: Arc::from(""),
            line: 1,
            column: 1,
            offset: 0,
            len: 0,
        }
    }
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    /// Smallest span covering both `self` and `other`. Line/column come from
    /// whichever starts first.
    pub fn to(&self, other: &Span) -> Span {
        let (first, _) = if self.offset <= other.offset {
            (self, other)
        } else {
            (other, self)
        };
        let end = self.end().max(other.end());
        Span {
            file: first.file.clone(),
            line: first.line,
            column: first.column,
            offset: first.offset,
            len: end - first.offset,
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.offset <= other.offset && other.end() <= self.end()
    }

    /// Zero-length span at the end of `self`.
    pub fn end_point(&self) -> Span {
        Span {
            offset: self.end(),
            len: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        })
    }
}

/// A textual edit: replace `span` with `replacement`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fix {
    pub span: Span,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub span: Span,
    pub message: String,
    pub fix: Option<Fix>,
}

impl Diagnostic {
    pub fn error(code: &'static str, span: Span, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, code, span, message)
    }

    pub fn warning(code: &'static str, span: Span, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, code, span, message)
    }

    pub fn info(code: &'static str, span: Span, message: impl Into<String>) -> Self {
        Self::new(Severity::Info, code, span, message)
    }

    fn new(severity: Severity, code: &'static str, span: Span, message: impl Into<String>) -> Self {
        let message = message.into();
        debug_assert!(!message.is_empty());
        Diagnostic {
            severity,
            code,
            span,
            message,
            fix: None,
        }
    }

    pub fn with_fix(mut self, span: Span, replacement: impl Into<String>) -> Self {
        self.fix = Some(Fix {
            span,
            replacement: replacement.into(),
        });
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: severity[code]: message`
    pub fn render(&self) -> String {
        format!(
            "{}:{}:{}: {}[{}]: {}",
            self.span.file, self.span.line, self.span.column, self.severity, self.code, self.message
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        let fix = match &self.fix {
            Some(fix) => serde_json::json!({
                "line": fix.span.line,
                "column": fix.span.column,
                "length": fix.span.len,
                "replacement": fix.replacement,
            }),
            None => serde_json::Value::Null,
        };
        serde_json::json!({
            "severity": self.severity,
            "code": self.code,
            "file": &*self.span.file,
            "line": self.span.line,
            "column": self.span.column,
            "message": self.message,
            "fix": fix,
        })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

/// Apply every non-overlapping fix in `diags` to `source`.
///
/// Fixes are applied back to front. When two fixes overlap, the one that
/// starts first wins and the other is dropped; callers re-validate and
/// iterate to reach a fixpoint.
pub fn apply_fixes(source: &str, diags: &[Diagnostic]) -> (String, usize) {
    let mut fixes: Vec<&Fix> = diags.iter().filter_map(|d| d.fix.as_ref()).collect();
    fixes.sort_by_key(|f| (f.span.offset, f.span.len));
    let mut chosen: Vec<&Fix> = Vec::new();
    let mut cursor = 0usize;
    for fix in fixes {
        if fix.span.offset < cursor || fix.span.end() > source.len() {
            continue;
        }
        if chosen
            .last()
            .is_some_and(|prev| prev.span.offset == fix.span.offset && prev.span.len == fix.span.len)
        {
            continue;
        }
        cursor = fix.span.end().max(fix.span.offset + 1);
        chosen.push(fix);
    }
    let mut out = source.to_string();
    for fix in chosen.iter().rev() {
        out.replace_range(fix.span.offset..fix.span.end(), &fix.replacement);
    }
    (out, chosen.len())
}

/// Stable diagnostic codes.
pub mod codes {
    /// Syntax error.
    pub const SYNTAX: &str = "PP001";

    pub const UNRESOLVED_SIGNAL: &str = "PP101";
    pub const SIGNAL_TYPE_MISMATCH: &str = "PP102";
    pub const DUPLICATE_SIGNAL: &str = "PP103";
    pub const DUPLICATE_ROUTE: &str = "PP104";
    pub const INVALID_SIGNAL_CONFIG: &str = "PP105";
    pub const DUPLICATE_BLOCK: &str = "PP106";
    pub const UNRESOLVED_POLICY: &str = "PP107";
    pub const PASSES_SKIPPED: &str = "PP190";

    pub const CATEGORY_OVERLAP: &str = "PP201";
    pub const DUPLICATE_CATEGORY: &str = "PP202";

    pub const MISSING_GUARD: &str = "PP301";

    pub const GROUP_MISSING_MEMBER: &str = "PP401";
    pub const GROUP_SHARED_CATEGORY: &str = "PP402";
    pub const GROUP_DEFAULT: &str = "PP403";
    pub const GROUP_TEMPERATURE: &str = "PP404";
    pub const GROUP_THRESHOLD: &str = "PP405";
    pub const GROUP_CENTROIDS_CLOSE: &str = "PP406";
    pub const GROUP_CRISP_MEMBER: &str = "PP407";
    pub const GROUP_OVERLAPPING_MEMBERSHIP: &str = "PP408";

    pub const TEST_UNKNOWN_ROUTE: &str = "PP501";
    pub const TEST_EMPTY_QUERY: &str = "PP502";

    pub const TIER_MIXED: &str = "PP601";
    pub const TIER_STRUCTURE: &str = "PP602";

    pub const TREE_MISSING_ELSE: &str = "PP701";
    pub const TREE_UNREACHABLE_BRANCH: &str = "PP702";

    pub const CANNOT_CERTIFY: &str = "PP801";
    pub const MISPLACED_DEFAULT: &str = "PP802";

    pub const ANALYSIS_INCOMPLETE: &str = "PP901";
    pub const DEGENERATE_CENTROID: &str = "PP902";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(offset: usize, len: usize) -> Span {
        Span {
            offset,
            len,
            ..Span::default()
        }
    }

    #[test]
    fn span_union_covers_both() {
        let a = span(3, 2);
        let b = span(10, 4);
        let u = a.to(&b);
        assert_eq!((u.offset, u.len), (3, 11));
        assert!(u.contains(&a) && u.contains(&b));
    }

    #[test]
    fn overlapping_fixes_keep_the_first() {
        let src = "abcdef";
        let d1 = Diagnostic::warning("PP301", span(0, 0), "m").with_fix(span(1, 2), "X");
        let d2 = Diagnostic::warning("PP301", span(0, 0), "m").with_fix(span(2, 2), "Y");
        let d3 = Diagnostic::warning("PP301", span(0, 0), "m").with_fix(span(5, 1), "Z");
        let (out, applied) = apply_fixes(src, &[d2, d1, d3]);
        assert_eq!(out, "aXdeZ");
        assert_eq!(applied, 2);
    }

    #[test]
    fn render_text_format() {
        let mut s = span(0, 1);
        s.file = Arc::from("a.srdsl");
        s.line = 4;
        s.column = 7;
        let d = Diagnostic::error("PP101", s, "unresolved signal");
        assert_eq!(d.render(), "a.srdsl:4:7: error[PP101]: unresolved signal");
    }
}
