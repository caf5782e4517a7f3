//! Embedding providers and sparse vectors.
//!
//! Vectors are stored sparsely so that the character-trigram provider can use
//! the exact trigram code as a coordinate, and dense providers simply fill
//! coordinates `0..d`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{normalize, tokenize};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vector {
    entries: Vec<(u64, f64)>,
}

impl Vector {
    pub fn from_dense(values: &[f64]) -> Self {
        Vector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u64, v))
                .collect(),
        }
    }

    pub fn from_sparse(map: BTreeMap<u64, f64>) -> Self {
        Vector {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn normalized(&self) -> Vector {
        let n = self.norm();
        if n == 0.0 {
            return Vector::default();
        }
        Vector {
            entries: self.entries.iter().map(|&(i, v)| (i, v / n)).collect(),
        }
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Arithmetic mean; the empty mean is the zero vector.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Vector>) -> Vector {
        let mut sum: BTreeMap<u64, f64> = BTreeMap::new();
        let mut n = 0usize;
        for v in vectors {
            n += 1;
            for &(i, x) in &v.entries {
                *sum.entry(i).or_default() += x;
            }
        }
        if n == 0 {
            return Vector::default();
        }
        for x in sum.values_mut() {
            *x /= n as f64;
        }
        Vector::from_sparse(sum)
    }
}

/// Cosine similarity clamped to [-1, 1]; 0 when either side is the zero
/// vector.
pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Maps strings to vectors. Must be deterministic per instance and return
/// one vector per text, in order.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>>;
}

/// Character-trigram counts over `<word>`-padded lowercase tokens,
/// unit-normalized. The coordinate of a trigram is its three code points
/// packed into 21-bit fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramProvider;

impl TrigramProvider {
    pub fn trigram_counts(text: &str) -> BTreeMap<u64, f64> {
        let mut counts = BTreeMap::new();
        for token in normalize(text).split(' ').filter(|t| !t.is_empty()) {
            let padded: Vec<char> = std::iter::once('<')
                .chain(token.chars())
                .chain(std::iter::once('>'))
                .collect();
            for w in padded.windows(3) {
                let code = (u64::from(w[0]) << 42) | (u64::from(w[1]) << 21) | u64::from(w[2]);
                *counts.entry(code).or_default() += 1.0;
            }
        }
        counts
    }

    pub fn vector(text: &str) -> Vector {
        Vector::from_sparse(Self::trigram_counts(text)).normalized()
    }
}

impl EmbeddingProvider for TrigramProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>> {
        Ok(texts.iter().map(|t| Self::vector(t)).collect())
    }
}

/// Precomputed vectors, one `text TAB v1 v2 ...` record per line. Texts
/// without a record fall back to the mean of their tokens' records.
#[derive(Debug, Clone, Default)]
pub struct VectorsFileProvider {
    vectors: HashMap<String, Vector>,
    dimension: usize,
}

impl VectorsFileProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Resource {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path.display().to_string();
        Self::parse(&text, &name)
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut provider = VectorsFileProvider::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(name, line_no, "expected `text<TAB>values`"))?;
            let values: Vec<f64> = values
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(name, line_no, format!("bad number: {e}")))?;
            if values.is_empty() {
                return Err(Error::parse(name, line_no, "empty vector"));
            }
            if provider.dimension == 0 {
                provider.dimension = values.len();
            } else if values.len() != provider.dimension {
                return Err(Error::parse(
                    name,
                    line_no,
                    format!("dimension {} differs from {}", values.len(), provider.dimension),
                ));
            }
            provider.vectors.insert(normalize(key), Vector::from_dense(&values));
        }
        Ok(provider)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn lookup(&self, text: &str) -> Result<Vector> {
        let key = normalize(text);
        if let Some(v) = self.vectors.get(&key) {
            return Ok(v.clone());
        }
        let parts: Vec<&Vector> = tokenize(&key)
            .into_iter()
            .filter_map(|t| self.vectors.get(t))
            .collect();
        if parts.is_empty() {
            return Err(Error::Provider(format!("no vector for {text:?}")));
        }
        Ok(Vector::mean(parts))
    }
}

impl EmbeddingProvider for VectorsFileProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>> {
        texts.iter().map(|t| self.lookup(t)).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Client for a remote embedding service: `POST {"texts": [...]}` answered
/// by `{"vectors": [[...]]}` in the same order.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    url: String,
    batch_size: usize,
    retries: u32,
    backoff: Duration,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteProvider {
            url: url.into(),
            batch_size: 256,
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn request(&self, texts: &[String]) -> Result<EmbedResponse> {
        let body = EmbedRequest { texts: texts.to_vec() };
        let mut attempt = 0;
        loop {
            let outcome = ureq::post(&self.url)
                .send_json(&body)
                .and_then(|mut resp| resp.body_mut().read_json::<EmbedResponse>());
            match outcome {
                Ok(resp) => return Ok(resp),
                Err(_) if attempt < self.retries => {
                    attempt += 1;
                    std::thread::sleep(self.backoff * attempt);
                }
                Err(e) => {
                    return Err(Error::Provider(format!(
                        "{} after {} attempts: {e}",
                        self.url,
                        attempt + 1
                    )))
                }
            }
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let mut out = Vec::with_capacity(texts.len());
        let mut dimension = None;
        for batch in texts.chunks(self.batch_size) {
            let resp = self.request(batch)?;
            if resp.vectors.len() != batch.len() {
                return Err(Error::Provider(format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    resp.vectors.len()
                )));
            }
            for v in resp.vectors {
                let d = *dimension.get_or_insert(v.len());
                if v.len() != d || d == 0 {
                    return Err(Error::Provider(format!("inconsistent vector dimension {}", v.len())));
                }
                out.push(Vector::from_dense(&v));
            }
        }
        Ok(out)
    }
}

/// Per-run cache of unit-normalized text vectors in front of a provider.
pub struct Embedder<'a> {
    provider: &'a dyn EmbeddingProvider,
    cache: HashMap<String, Vector>,
}

impl<'a> Embedder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        Embedder {
            provider,
            cache: HashMap::new(),
        }
    }

    /// Fetch every uncached text in one provider call.
    pub fn prefetch<S: AsRef<str>>(&mut self, texts: impl IntoIterator<Item = S>) -> Result<()> {
        let mut missing: Vec<String> = texts
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| !self.cache.contains_key(t))
            .collect();
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            return Ok(());
        }
        let vectors = self.provider.embed(&missing)?;
        if vectors.len() != missing.len() {
            return Err(Error::Provider(format!(
                "provider returned {} vectors for {} texts",
                vectors.len(),
                missing.len()
            )));
        }
        for (t, v) in missing.into_iter().zip(vectors) {
            self.cache.insert(t, v.normalized());
        }
        Ok(())
    }

    pub fn text_vector(&mut self, text: &str) -> Result<Vector> {
        if let Some(v) = self.cache.get(text) {
            return Ok(v.clone());
        }
        self.prefetch([text])?;
        Ok(self.cache[text].clone())
    }
}
