//! Canonical document encoding.
//!
//! Documents are pretty-printed JSON with a trailing newline. Struct fields keep their
//! declaration order and every map is a `BTreeMap`, so equal documents always encode
//! to identical bytes.
//!
//! [`ParseMode::Strict`] rejects unknown top-level fields; [`ParseMode::Lenient`]
//! keeps them in the document's `extra` map and writes them back on serialize.
//! Nested records reject unknown fields in both modes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::schema::{Scenario, UseCaseWorksheet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub reason: String,
}

impl ParseError {
    fn at(text: &str, byte: usize, reason: String) -> Self {
        let before = &text[..byte.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ParseError { line, column, reason }
    }
}

/// A top-level document with a canonical encoding.
pub trait Document: Serialize + DeserializeOwned {
    /// Names of fields that were not recognised when the document was parsed.
    fn unknown_fields(&self) -> Vec<String> {
        Vec::new()
    }
}

impl Document for UseCaseWorksheet {
    fn unknown_fields(&self) -> Vec<String> {
        self.extra.keys().cloned().collect()
    }
}

impl Document for Scenario {
    fn unknown_fields(&self) -> Vec<String> {
        self.extra.keys().cloned().collect()
    }
}

pub fn serialize<D: Document>(doc: &D) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("documents are plain data");
    out.push(b'\n');
    out
}

pub fn parse<D: Document>(bytes: &[u8], mode: ParseMode) -> Result<D, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError {
        line: 1,
        column: e.valid_up_to() + 1,
        reason: "document is not valid UTF-8".into(),
    })?;
    if text.trim().is_empty() {
        return Err(ParseError { line: 1, column: 1, reason: "empty document".into() });
    }
    let doc: D = serde_json::from_str(text).map_err(|e| ParseError {
        line: e.line(),
        column: e.column(),
        reason: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
    })?;
    if mode == ParseMode::Strict {
        if let Some(field) = doc.unknown_fields().into_iter().next() {
            let needle = format!("\"{field}\"");
            let pos = text.find(&needle).unwrap_or(0);
            return Err(ParseError::at(text, pos, format!("unknown field `{field}`")));
        }
    }
    Ok(doc)
}

pub fn parse_str<D: Document>(text: &str, mode: ParseMode) -> Result<D, ParseError> {
    parse(text.as_bytes(), mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_input() {
        let err = parse::<UseCaseWorksheet>(b"  \n", ParseMode::Strict).unwrap_err();
        assert_eq!(err.reason, "empty document");
        assert_eq!((err.line, err.column), (1, 1));
    }

    #[test]
    fn malformed_input_reports_position() {
        let err = parse::<UseCaseWorksheet>(b"{\n  \"id\": \"uc-x\",\n  oops\n}", ParseMode::Strict).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.column > 1);
    }

    #[test]
    fn fixture_worksheets_round_trip() {
        let all = fixtures::worksheets();
        assert_eq!(all.len(), 6);
        for w in all {
            let bytes = serialize(&w);
            let back: UseCaseWorksheet = parse(&bytes, ParseMode::Strict).unwrap();
            assert_eq!(back, w);
            assert_eq!(serialize(&back), bytes);
        }
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let w = fixtures::worksheet("uc-credit-memo-generation").unwrap();
        let mut value = serde_json::to_value(&w).unwrap();
        value["reviewed_by_legal"] = serde_json::json!(true);
        let bytes = serde_json::to_vec_pretty(&value).unwrap();

        let err = parse::<UseCaseWorksheet>(&bytes, ParseMode::Strict).unwrap_err();
        assert!(err.reason.contains("reviewed_by_legal"), "{err}");
        assert!(err.line > 1);

        let lenient: UseCaseWorksheet = parse(&bytes, ParseMode::Lenient).unwrap();
        assert_eq!(lenient.extra["reviewed_by_legal"], serde_json::json!(true));
        let again: serde_json::Value = serde_json::from_slice(&serialize(&lenient)).unwrap();
        assert_eq!(again, value);
    }

    #[test]
    fn nested_unknown_fields_rejected_in_both_modes() {
        let w = fixtures::worksheet("uc-credit-memo-generation").unwrap();
        let mut value = serde_json::to_value(&w).unwrap();
        value["direct_users"][0]["clearance"] = serde_json::json!("high");
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(parse::<UseCaseWorksheet>(&bytes, ParseMode::Lenient).is_err());
    }
}
