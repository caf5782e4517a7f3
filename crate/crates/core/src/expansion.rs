//! Expansion of maximal strings into their modification spans.
//!
//! A maximal string is the head token together with every modifier subtree
//! hanging below it. Each subset of the head's direct modifier subtrees that
//! yields a contiguous token range is emitted as a derived span.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{normalize, tokenize, Lexicon};

/// Above this many direct modifiers only a linear family of subsets is
/// enumerated.
pub const MAX_ENUMERATED_MODIFIERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    /// Index of the syntactic parent within the span, `-1` for the root.
    pub head: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSpan {
    pub text: String,
    pub tokens: Option<Vec<TokenAnnotation>>,
    pub count: u64,
    pub is_input: bool,
}

impl AnnotatedSpan {
    pub fn input(text: impl Into<String>, count: u64) -> Self {
        AnnotatedSpan {
            text: text.into(),
            tokens: None,
            count,
            is_input: true,
        }
    }

    pub fn with_tokens(mut self, tokens: Vec<TokenAnnotation>) -> Self {
        self.tokens = Some(tokens);
        self
    }

    pub fn normalized(&self) -> String {
        normalize(&self.text)
    }
}

/// Check a span's token annotation: the forms joined by single spaces must
/// equal the whitespace-normalized text, and the heads must form a tree.
/// Spans without tokens are always valid.
pub fn validate_span(span: &AnnotatedSpan) -> Result<()> {
    let Some(tokens) = &span.tokens else { return Ok(()) };
    let joined = tokens.iter().map(|t| t.form.as_str()).collect::<Vec<_>>().join(" ");
    let text = span.text.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined != text {
        return Err(Error::Annotation {
            line: None,
            message: format!("token forms {joined:?} do not spell the text {text:?}"),
        });
    }
    validate_tree(tokens).map(|_| ())
}

/// Check that `head` links form a single tree and return its root.
pub fn validate_tree(tokens: &[TokenAnnotation]) -> Result<usize> {
    let n = tokens.len();
    let invalid = |message: String| Error::Annotation {
        line: None,
        message,
    };
    if n == 0 {
        return Err(invalid("span has no tokens".into()));
    }
    let mut roots = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.head == -1 {
            roots.push(i);
        } else if t.head < 0 || t.head as usize >= n {
            return Err(invalid(format!("token {i} has out-of-range head {}", t.head)));
        } else if t.head as usize == i {
            return Err(invalid(format!("token {i} is its own head")));
        }
    }
    let root = match roots.as_slice() {
        [r] => *r,
        [] => return Err(invalid("no root token".into())),
        _ => return Err(invalid(format!("multiple roots at {roots:?}"))),
    };
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while cur != root {
            cur = tokens[cur].head as usize;
            steps += 1;
            if steps > n {
                return Err(invalid(format!("cyclic head links through token {start}")));
            }
        }
    }
    Ok(root)
}

fn is_head_pos(pos: &str) -> bool {
    let p = pos.to_ascii_uppercase();
    p.starts_with("NN") || p.starts_with("JJ") || matches!(p.as_str(), "NOUN" | "PROPN" | "ADJ")
}

/// Index of the head token. With annotations this is the tree root; without,
/// it is the last token (of [`tokenize`]) that is not a stopword.
pub fn find_head(span: &AnnotatedSpan, lexicon: &Lexicon) -> Result<usize> {
    if let Some(tokens) = &span.tokens {
        return validate_tree(tokens);
    }
    let tokens = tokenize(&span.text);
    if tokens.is_empty() {
        return Err(Error::Argument(format!("empty span {:?}", span.text)));
    }
    Ok(tokens
        .iter()
        .rposition(|t| !lexicon.is_stopword(t))
        .unwrap_or(tokens.len() - 1))
}

/// Fallback head for token lists that carry POS tags but no tree.
pub fn find_head_by_pos(tokens: &[TokenAnnotation], lexicon: &Lexicon) -> Option<usize> {
    tokens.iter().rposition(|t| {
        !lexicon.is_stopword(&t.form) && t.pos.as_deref().is_none_or(is_head_pos)
    })
}

/// Surface form of the head token.
pub fn head_word(span: &AnnotatedSpan, lexicon: &Lexicon) -> Result<String> {
    let head = find_head(span, lexicon)?;
    Ok(match &span.tokens {
        Some(tokens) => tokens[head].form.clone(),
        None => tokenize(&span.text)[head].to_string(),
    })
}

fn subtree(children: &[Vec<usize>], node: usize, out: &mut Vec<usize>) {
    out.push(node);
    for &c in &children[node] {
        subtree(children, c, out);
    }
}

/// Index subsets of `modifiers` to combine with the head.
fn modifier_subsets(modifiers: &[usize], head: usize) -> Vec<Vec<usize>> {
    let n = modifiers.len();
    if n <= MAX_ENUMERATED_MODIFIERS {
        return (0u32..(1 << n))
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
    }
    // Nearest-first on each side of the head.
    let mut left: Vec<usize> = (0..n).filter(|&i| modifiers[i] < head).collect();
    left.reverse();
    let right: Vec<usize> = (0..n).filter(|&i| modifiers[i] > head).collect();
    let mut subsets = Vec::new();
    for i in 0..=left.len() {
        for j in 0..=right.len() {
            let edge = i == 0 || j == 0 || i == left.len() || j == right.len();
            if edge {
                let mut s: Vec<usize> = left[..i].iter().chain(&right[..j]).copied().collect();
                s.sort_unstable();
                subsets.push(s);
            }
        }
    }
    subsets.sort();
    subsets.dedup();
    subsets
}

fn derived(text: String, tokens: Option<Vec<TokenAnnotation>>) -> AnnotatedSpan {
    AnnotatedSpan {
        text,
        tokens,
        count: 0,
        is_input: false,
    }
}

/// Derived modification spans of `span`, excluding the span itself, sorted
/// by normalized text.
pub fn expand(span: &AnnotatedSpan, lexicon: &Lexicon) -> Vec<AnnotatedSpan> {
    let own = span.normalized();
    let annotated = span
        .tokens
        .as_ref()
        .and_then(|tokens| validate_tree(tokens).ok().map(|root| (tokens, root)));

    let mut out: BTreeMap<String, AnnotatedSpan> = BTreeMap::new();
    match annotated {
        Some((tokens, head)) => {
            let n = tokens.len();
            let mut children = vec![Vec::new(); n];
            for (i, t) in tokens.iter().enumerate() {
                if t.head >= 0 {
                    children[t.head as usize].push(i);
                }
            }
            let modifiers = children[head].clone();
            let subtrees: Vec<Vec<usize>> = modifiers
                .iter()
                .map(|&m| {
                    let mut s = Vec::new();
                    subtree(&children, m, &mut s);
                    s
                })
                .collect();
            for subset in modifier_subsets(&modifiers, head) {
                let mut idx: Vec<usize> = std::iter::once(head)
                    .chain(subset.iter().flat_map(|&s| subtrees[s].iter().copied()))
                    .collect();
                idx.sort_unstable();
                let contiguous = idx.windows(2).all(|w| w[1] == w[0] + 1);
                if !contiguous || idx.len() == n {
                    continue;
                }
                let position: BTreeMap<usize, i64> = idx
                    .iter()
                    .enumerate()
                    .map(|(new, &old)| (old, new as i64))
                    .collect();
                let sub_tokens: Vec<TokenAnnotation> = idx
                    .iter()
                    .map(|&i| {
                        let t = &tokens[i];
                        TokenAnnotation {
                            head: if i == head { -1 } else { position[&(t.head as usize)] },
                            ..t.clone()
                        }
                    })
                    .collect();
                let text = sub_tokens
                    .iter()
                    .map(|t| t.form.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                let key = normalize(&text);
                if key != own {
                    out.entry(key).or_insert_with(|| derived(text, Some(sub_tokens)));
                }
            }
        }
        None => {
            if let Ok(word) = head_word(span, lexicon) {
                let key = normalize(&word);
                if key != own {
                    out.insert(key, derived(word, None));
                }
            }
        }
    }
    out.into_values().collect()
}

/// Union of the inputs and all their derived spans, deduplicated by
/// normalized text and sorted by it. Inputs win over derived spans with the
/// same text; repeated inputs fold their counts.
pub fn expand_all(inputs: &[AnnotatedSpan], lexicon: &Lexicon) -> Result<Vec<AnnotatedSpan>> {
    if inputs.is_empty() {
        return Err(Error::Argument("no input spans to expand".into()));
    }
    let mut spans = fold(inputs);
    let derived: Vec<(String, AnnotatedSpan)> = inputs
        .iter()
        .flat_map(|s| expand(s, lexicon))
        .map(|d| (d.normalized(), d))
        .collect();
    for (key, d) in derived {
        spans.entry(key).or_insert(d);
    }
    Ok(spans.into_values().collect())
}

/// Inputs with equal normalized text folded together, counts summed,
/// sorted by normalized text.
pub fn fold_inputs(inputs: &[AnnotatedSpan]) -> Vec<AnnotatedSpan> {
    fold(inputs).into_values().collect()
}

fn fold(inputs: &[AnnotatedSpan]) -> BTreeMap<String, AnnotatedSpan> {
    let mut spans: BTreeMap<String, AnnotatedSpan> = BTreeMap::new();
    for span in inputs {
        let key = span.normalized();
        match spans.get_mut(&key) {
            Some(existing) => existing.count += span.count,
            None => {
                spans.insert(
                    key,
                    AnnotatedSpan {
                        is_input: true,
                        ..span.clone()
                    },
                );
            }
        }
    }
    spans
}
