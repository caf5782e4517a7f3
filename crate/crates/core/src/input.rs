//! Input span files: JSON records or raw text, one span per line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expansion::{validate_span, AnnotatedSpan, TokenAnnotation};
use crate::textnorm::normalize;

#[derive(Debug, Deserialize)]
struct Record {
    text: String,
    #[serde(default = "one")]
    count: u64,
    #[serde(default)]
    tokens: Option<Vec<TokenAnnotation>>,
}

fn one() -> u64 {
    1
}

pub fn parse_input(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSpan>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Resource {
        path: path.to_path_buf(),
        source,
    })?;
    parse_input_str(&text, &path.display().to_string())
}

/// Records mode when the first non-blank character is `{`, raw text mode
/// otherwise. Texts equal after normalization are folded into the first
/// occurrence with their counts summed.
pub fn parse_input_str(text: &str, name: &str) -> Result<Vec<AnnotatedSpan>> {
    let records = text.trim_start().starts_with('{');
    let mut spans: Vec<AnnotatedSpan> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let span = if records {
            let r: Record =
                serde_json::from_str(trimmed).map_err(|e| Error::parse(name, lineno, e.to_string()))?;
            if r.count == 0 {
                return Err(Error::parse(name, lineno, "count must be at least 1"));
            }
            let mut span = AnnotatedSpan::input(r.text, r.count);
            span.tokens = r.tokens;
            validate_span(&span).map_err(|e| match e {
                Error::Annotation { message, .. } => Error::Annotation { line: Some(lineno), message },
                other => other,
            })?;
            span
        } else {
            AnnotatedSpan::input(trimmed, 1)
        };
        let key = span.normalized();
        if key.is_empty() {
            return Err(Error::parse(name, lineno, "empty text"));
        }
        match seen.get(&key) {
            Some(&j) => spans[j].count += span.count,
            None => {
                seen.insert(key, spans.len());
                spans.push(span);
            }
        }
    }
    Ok(spans)
}

/// Normalized text of every span, used for digests and comparisons.
pub fn span_texts(spans: &[AnnotatedSpan]) -> Vec<String> {
    spans.iter().map(|s| normalize(&s.text)).collect()
}
