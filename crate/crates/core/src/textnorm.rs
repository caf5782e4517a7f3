//! Lexical normalization: resource loading, lemmatization and lemma bags.
//!
//! A string is reduced to the *set* of lemma classes of its content words.
//! Stopwords, modal words and quantity words are discarded before the
//! mapping. Two lemmas share a class when they are linked, directly or
//! through a chain, by a synonym pair or by a one-edit spelling variant.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const MODALS_FILE: &str = "modals.txt";
pub const QUANTITIES_FILE: &str = "quantities.txt";
pub const LEMMAS_FILE: &str = "lemmas.tsv";
pub const SYNONYMS_FILE: &str = "synonyms.tsv";

/// Minimum length (in characters) of both lemmas for a spelling-variant link.
const EDIT_LINK_MIN_LEN: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub stopwords: BTreeSet<String>,
    pub modals: BTreeSet<String>,
    pub quantities: BTreeSet<String>,
    pub lemma_table: BTreeMap<String, String>,
    /// Always symmetric: `(a, b)` present implies `(b, a)` present.
    pub synonym_pairs: BTreeSet<(String, String)>,
}

impl Lexicon {
    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    pub fn is_modal(&self, word: &str) -> bool {
        self.modals.contains(&word.to_lowercase())
    }

    pub fn is_quantity(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        is_numeral(&w) || self.quantities.contains(&w)
    }

    fn is_filtered(&self, form: &str, lemma: &str) -> bool {
        [form, lemma]
            .iter()
            .any(|w| self.is_stopword(w) || self.is_modal(w) || self.is_quantity(w))
    }

    pub fn add_synonym(&mut self, a: &str, b: &str) {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a != b {
            self.synonym_pairs.insert((a.clone(), b.clone()));
            self.synonym_pairs.insert((b, a));
        }
    }

    /// Order-independent digest of the loaded resources.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (tag, set) in [
            ("s", &self.stopwords),
            ("m", &self.modals),
            ("q", &self.quantities),
        ] {
            for w in set {
                hasher.update(format!("{tag}\t{w}\n").as_bytes());
            }
        }
        for (form, lemma) in &self.lemma_table {
            hasher.update(format!("l\t{form}\t{lemma}\n").as_bytes());
        }
        for (a, b) in &self.synonym_pairs {
            hasher.update(format!("y\t{a}\t{b}\n").as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

fn is_numeral(word: &str) -> bool {
    let body = word.strip_prefix(['+', '-']).unwrap_or(word);
    let body = body.strip_suffix('%').unwrap_or(body);
    let mut parts = body.splitn(2, ['.', ',']);
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.chars().all(|c| c.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()))
}

/// Non-blank, non-comment lines with their 1-based line numbers. A missing
/// file yields no lines.
fn resource_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Resource {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn load_word_set(path: &Path) -> Result<BTreeSet<String>> {
    Ok(resource_lines(path)?
        .into_iter()
        .map(|(_, l)| l.to_lowercase())
        .collect())
}

fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut pairs = Vec::new();
    for (line_no, line) in resource_lines(path)? {
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        match fields.as_slice() {
            [a, b] if !a.is_empty() && !b.is_empty() => {
                pairs.push((a.to_lowercase(), b.to_lowercase()))
            }
            _ => {
                return Err(Error::parse(
                    &file,
                    line_no,
                    format!("expected two fields, found {:?}", line),
                ))
            }
        }
    }
    Ok(pairs)
}

/// Load the lexical resources of `dir`. Every file is optional.
pub fn load_lexicon(dir: impl AsRef<Path>) -> Result<Lexicon> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Resource {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut lexicon = Lexicon {
        stopwords: load_word_set(&dir.join(STOPWORDS_FILE))?,
        modals: load_word_set(&dir.join(MODALS_FILE))?,
        quantities: load_word_set(&dir.join(QUANTITIES_FILE))?,
        ..Lexicon::default()
    };
    for (form, lemma) in load_pairs(&dir.join(LEMMAS_FILE))? {
        lexicon.lemma_table.insert(form, lemma);
    }
    for (a, b) in load_pairs(&dir.join(SYNONYMS_FILE))? {
        lexicon.add_synonym(&a, &b);
    }
    Ok(lexicon)
}

/// Lowercase and collapse internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split on whitespace and trim surrounding punctuation from each token.
/// Internal punctuation such as the hyphen in "x-ray" is kept.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn lemmatize(word: &str, lexicon: &Lexicon) -> String {
    let lower = word.to_lowercase();
    if let Some(lemma) = lexicon.lemma_table.get(&lower) {
        return lemma.clone();
    }
    suffix_rule(&lower).unwrap_or(lower)
}

/// Ordered suffix rules, first match wins.
fn suffix_rule(word: &str) -> Option<String> {
    let len = word.chars().count();
    let stem = |suffix: &str| &word[..word.len() - suffix.len()];
    if len > 4 && word.ends_with("ies") {
        return Some(format!("{}y", stem("ies")));
    }
    if len >= 4
        && word.ends_with('s')
        && !["ss", "us", "is"].iter().any(|s| word.ends_with(s))
    {
        return Some(stem("s").to_string());
    }
    if word.ends_with("ing") && len - 3 >= 4 {
        return Some(stem("ing").to_string());
    }
    if word.ends_with("ed") && len - 2 >= 4 {
        return Some(stem("ed").to_string());
    }
    None
}

/// Lemmas of the content words of `text`, in token order.
pub fn content_lemmas(text: &str, lexicon: &Lexicon) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|form| {
            let lemma = lemmatize(form, lexicon);
            (!lexicon.is_filtered(form, &lemma)).then_some(lemma)
        })
        .collect()
}

/// A lemma class, named by its lexicographically smallest member lemma.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(Arc<str>);

impl ClassId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LemmaClassIndex {
    class_of: HashMap<String, ClassId>,
    classes: BTreeMap<ClassId, Vec<String>>,
}

impl LemmaClassIndex {
    /// The class of `lemma`. Lemmas outside the indexed vocabulary form
    /// their own singleton class.
    pub fn class_of(&self, lemma: &str) -> ClassId {
        self.class_of
            .get(lemma)
            .cloned()
            .unwrap_or_else(|| ClassId(Arc::from(lemma)))
    }

    pub fn members(&self, class: &ClassId) -> &[String] {
        self.classes.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = (&ClassId, &[String])> {
        self.classes.iter().map(|(c, m)| (c, m.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn is_spelling_variant(a: &str, b: &str) -> bool {
    a.chars().count() >= EDIT_LINK_MIN_LEN
        && b.chars().count() >= EDIT_LINK_MIN_LEN
        && strsim::levenshtein(a, b) <= 1
}

/// Partition `vocabulary` into the connected components of the synonym and
/// spelling-variant link graph.
pub fn build_class_index<S: AsRef<str>>(
    vocabulary: impl IntoIterator<Item = S>,
    lexicon: &Lexicon,
) -> LemmaClassIndex {
    let words: Vec<String> = vocabulary
        .into_iter()
        .map(|w| w.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let position: HashMap<&str, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut sets = DisjointSets::new(words.len());

    for (a, b) in &lexicon.synonym_pairs {
        if let (Some(&i), Some(&j)) = (position.get(a.as_str()), position.get(b.as_str())) {
            sets.union(i, j);
        }
    }

    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, w) in words.iter().enumerate() {
        let len = w.chars().count();
        if len >= EDIT_LINK_MIN_LEN {
            by_len.entry(len).or_default().push(i);
        }
    }
    for (&len, bucket) in &by_len {
        for (k, &i) in bucket.iter().enumerate() {
            for &j in &bucket[k + 1..] {
                if is_spelling_variant(&words[i], &words[j]) {
                    sets.union(i, j);
                }
            }
            for &j in by_len.get(&(len + 1)).into_iter().flatten() {
                if is_spelling_variant(&words[i], &words[j]) {
                    sets.union(i, j);
                }
            }
        }
    }

    // Union keeps the smaller index as representative, and words are
    // sorted, so the root is the smallest member.
    let mut index = LemmaClassIndex::default();
    let mut root_class: HashMap<usize, ClassId> = HashMap::new();
    for (i, w) in words.iter().enumerate() {
        let root = sets.find(i);
        let class = root_class
            .entry(root)
            .or_insert_with(|| ClassId(Arc::from(words[root].as_str())))
            .clone();
        index.classes.entry(class.clone()).or_default().push(w.clone());
        index.class_of.insert(w.clone(), class);
    }
    index
}

/// A set of lemma classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LemmaBag(BTreeSet<ClassId>);

impl LemmaBag {
    pub fn new() -> Self {
        LemmaBag::default()
    }

    pub fn singleton(class: ClassId) -> Self {
        LemmaBag(BTreeSet::from([class]))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, class: &ClassId) -> bool {
        self.0.contains(class)
    }

    pub fn is_subset(&self, other: &LemmaBag) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_proper_subset(&self, other: &LemmaBag) -> bool {
        self.0.len() < other.0.len() && self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &LemmaBag) -> LemmaBag {
        LemmaBag(self.0.union(&other.0).cloned().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassId> {
        self.0.iter()
    }
}

impl FromIterator<ClassId> for LemmaBag {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        LemmaBag(iter.into_iter().collect())
    }
}

pub fn to_bag(text: &str, lexicon: &Lexicon, index: &LemmaClassIndex) -> LemmaBag {
    content_lemmas(text, lexicon)
        .iter()
        .map(|lemma| index.class_of(lemma))
        .collect()
}
