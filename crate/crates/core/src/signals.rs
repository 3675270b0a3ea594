//! How a signal's config block is read.
//!
//! | type | keys |
//! |------|------|
//! | keyword | `keywords` or `terms`: list of strings |
//! | embedding | `candidates`: list of strings; `threshold`: cosine in (-1, 1), default 0.5 |
//! | domain, complexity, jailbreak, pii | `mmlu_categories`, `categories` or `candidates`; `threshold` as above |
//! | authz, context | `attribute` (default: the signal name); optional `value` |
//!
//! Classifier signals without any category list score against their own name.

use crate::dsl::{SignalDecl, SignalKind, SignalType, Value};
use crate::geometry::{centroid, Embedder, GeometryError, SphericalCap, UnitVector};

pub const DEFAULT_SIGNAL_THRESHOLD: f64 = 0.5;

/// Keyword phrases of a keyword signal.
pub fn keywords(sig: &SignalDecl) -> Option<Vec<&str>> {
    sig.str_list("keywords").or_else(|| sig.str_list("terms"))
}

/// Cosine threshold of a soft signal.
pub fn threshold(sig: &SignalDecl) -> f64 {
    sig.number("threshold").unwrap_or(DEFAULT_SIGNAL_THRESHOLD)
}

/// Texts whose embeddings define a classifier signal's categories.
pub fn categories(sig: &SignalDecl) -> Vec<&str> {
    for key in ["mmlu_categories", "categories", "candidates"] {
        if let Some(list) = sig.str_list(key) {
            if !list.is_empty() {
                return list;
            }
        }
    }
    vec![sig.name.as_str()]
}

/// Attribute key and optional expected value of an authz/context signal.
pub fn attribute(sig: &SignalDecl) -> (&str, Option<&Value>) {
    let key = sig.config.get("attribute").and_then(Value::as_str).unwrap_or(&sig.name);
    (key, sig.config.get("value"))
}

/// Centroid of an embedding signal's candidates, or of a classifier's
/// category texts.
pub fn signal_centroid(sig: &SignalDecl, embedder: &dyn Embedder<f64>) -> Result<UnitVector<f64>, GeometryError> {
    match sig.signal_type.kind() {
        SignalKind::Geometric => {
            let c = sig.str_list("candidates").unwrap_or_default();
            centroid(&c, embedder)
        }
        _ => centroid(&categories(sig), embedder),
    }
}

/// Activation cap of an embedding signal.
pub fn signal_cap(sig: &SignalDecl, embedder: &dyn Embedder<f64>) -> Result<SphericalCap<f64>, GeometryError> {
    SphericalCap::new(signal_centroid(sig, embedder)?, threshold(sig))
}

/// Problems with `sig`'s config, one message each.
pub fn config_problems(sig: &SignalDecl) -> Vec<String> {
    let mut out = Vec::new();
    let list_ok = |key: &str| sig.config.get(key).map(|v| v.as_str_list().is_some());
    match sig.signal_type {
        SignalType::Keyword => match keywords(sig) {
            None if list_ok("keywords") == Some(false) || list_ok("terms") == Some(false) => {
                out.push("`keywords` must be a list of strings".into())
            }
            None => out.push("keyword signal needs a `keywords` or `terms` list".into()),
            Some(k) if k.iter().all(|s| crate::geometry::tokenize(s).is_empty()) => {
                out.push("keyword list has no alphanumeric terms".into())
            }
            Some(_) => {}
        },
        SignalType::Embedding => match sig.str_list("candidates") {
            None => out.push("embedding signal needs a `candidates` list of strings".into()),
            Some(c) if c.is_empty() => out.push("`candidates` must not be empty".into()),
            Some(_) => {}
        },
        _ => {}
    }
    if sig.signal_type.kind() == SignalKind::Classifier {
        for key in ["mmlu_categories", "categories", "candidates"] {
            if list_ok(key) == Some(false) {
                out.push(format!("`{key}` must be a list of strings"));
            }
        }
    }
    if sig.signal_type.kind() != SignalKind::Crisp {
        if let Some(v) = sig.config.get("threshold") {
            match v.as_f64() {
                Some(t) if t > -1.0 && t < 1.0 => {}
                _ => out.push("`threshold` must be a number strictly between -1 and 1".into()),
            }
        }
    }
    if matches!(sig.signal_type, SignalType::Authz | SignalType::Context) {
        if let Some(v) = sig.config.get("attribute") {
            if v.as_str().is_none() {
                out.push("`attribute` must be a string".into());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn sig(src: &str) -> SignalDecl {
        parse(src).unwrap().signals.remove(0)
    }

    #[test]
    fn category_fallbacks() {
        let s = sig(r#"SIGNAL domain math { mmlu_categories: ["college_mathematics"] }"#);
        assert_eq!(categories(&s), vec!["college_mathematics"]);
        let s = sig("SIGNAL domain math { }");
        assert_eq!(categories(&s), vec!["math"]);
    }

    #[test]
    fn config_checks() {
        assert!(config_problems(&sig("SIGNAL keyword k { }"))[0].contains("keywords"));
        assert!(config_problems(&sig(r#"SIGNAL keyword k { terms: ["integral"] }"#)).is_empty());
        assert!(!config_problems(&sig("SIGNAL embedding e { candidates: [] }")).is_empty());
        assert!(!config_problems(&sig(r#"SIGNAL embedding e { candidates: ["x"] threshold: 1.5 }"#)).is_empty());
    }

    #[test]
    fn attribute_defaults_to_name() {
        let s = sig("SIGNAL authz staff { }");
        assert_eq!(attribute(&s).0, "staff");
        let s = sig(r#"SIGNAL authz staff { attribute: "role" value: "employee" }"#);
        assert_eq!(attribute(&s).0, "role");
    }
}
