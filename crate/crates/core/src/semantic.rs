//! Embedding-based and ontology-based merging of equivalent nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dag::{ConceptDag, NodeId};
use crate::embedding::{cosine, Embedder, EmbeddingProvider, Vector};
use crate::error::{Error, Result};
use crate::refine::choose_representative;
use crate::taxonomy::Ontology;
use crate::textnorm::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Sibling merge threshold.
    pub t1: f64,
    /// Parent-child merge threshold.
    pub t2: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { t1: 0.9, t2: 0.95 }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.t1 && self.t1 <= self.t2 && self.t2 <= 1.0 {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "thresholds must satisfy 0 < t1 <= t2 <= 1, got t1={} t2={}",
                self.t1, self.t2
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMergeStats {
    pub sibling_merges: usize,
    pub parent_child_merges: usize,
}

impl SemanticMergeStats {
    pub fn total(&self) -> usize {
        self.sibling_merges + self.parent_child_merges
    }
}

/// Unit-normalized mean of the member vectors, cached on the node.
pub fn node_vector(dag: &mut ConceptDag, id: NodeId, embedder: &mut Embedder) -> Result<Vector> {
    let node = dag
        .node(id)
        .ok_or_else(|| Error::Argument(format!("unknown node {id}")))?;
    if let Some(v) = &node.vector {
        return Ok(v.clone());
    }
    let texts: Vec<String> = node.members.iter().map(|m| m.text.clone()).collect();
    let mut vectors = Vec::with_capacity(texts.len());
    for t in &texts {
        vectors.push(embedder.text_vector(t)?);
    }
    let v = Vector::mean(&vectors).normalized();
    if let Some(node) = dag.node_mut(id) {
        node.vector = Some(v.clone());
    }
    Ok(v)
}

/// Slack on threshold comparisons so that identical texts meet t = 1.
pub const SIMILARITY_EPS: f64 = 1e-9;

fn similar(sim: f64, threshold: f64) -> bool {
    sim + SIMILARITY_EPS >= threshold
}

fn similarity(dag: &mut ConceptDag, a: NodeId, b: NodeId, embedder: &mut Embedder) -> Result<f64> {
    let va = node_vector(dag, a, embedder)?;
    let vb = node_vector(dag, b, embedder)?;
    Ok(cosine(&va, &vb))
}

fn rep(dag: &ConceptDag, id: NodeId) -> String {
    dag.node(id).map(choose_representative).unwrap_or_default()
}

fn has_members(dag: &ConceptDag, id: NodeId) -> bool {
    dag.node(id).is_some_and(|n| !n.members.is_empty()) && dag.root() != Some(id)
}

type PairKey = (String, String, NodeId, NodeId);

fn pair_key(dag: &ConceptDag, a: NodeId, b: NodeId) -> PairKey {
    let (ra, rb) = (rep(dag, a), rep(dag, b));
    if (&ra, a) <= (&rb, b) {
        (ra, rb, a, b)
    } else {
        (rb, ra, b, a)
    }
}

/// Merge similar children of `parent` to a local fixpoint. Pairs are taken
/// in lexicographic order of their representatives; after each merge only
/// the merged node's pairs are re-scored.
fn merge_children(
    dag: &mut ConceptDag,
    parent: NodeId,
    embedder: &mut Embedder,
    threshold: f64,
) -> Result<usize> {
    let kids: Vec<NodeId> = dag
        .children(parent)
        .iter()
        .copied()
        .filter(|&k| has_members(dag, k))
        .collect();
    let mut queue: BTreeSet<PairKey> = BTreeSet::new();
    for (i, &a) in kids.iter().enumerate() {
        for &b in &kids[i + 1..] {
            if similar(similarity(dag, a, b, embedder)?, threshold) {
                queue.insert(pair_key(dag, a, b));
            }
        }
    }
    let mut merges = 0;
    while let Some((_, _, a, b)) = queue.pop_first() {
        if !dag.contains(a) || !dag.contains(b) || dag.would_create_cycle(a, b) {
            continue;
        }
        let m = dag.merge_unchecked(a, b);
        merges += 1;
        queue.retain(|&(_, _, x, y)| ![x, y].iter().any(|z| *z == a || *z == b));
        let others: Vec<NodeId> = dag
            .children(parent)
            .iter()
            .copied()
            .filter(|&k| k != m && has_members(dag, k))
            .collect();
        for c in others {
            if similar(similarity(dag, m, c, embedder)?, threshold) {
                queue.insert(pair_key(dag, m, c));
            }
        }
    }
    Ok(merges)
}

/// Two merge passes: siblings at `t1` in DFS preorder from the root, then
/// parent-child pairs at `t2`. Merges that would close a cycle are skipped.
/// Provider failures abort before the graph is touched.
pub fn merge_semantic(
    dag: &mut ConceptDag,
    provider: &dyn EmbeddingProvider,
    config: &MergeConfig,
) -> Result<SemanticMergeStats> {
    config.validate()?;
    let mut embedder = Embedder::new(provider);
    embedder.prefetch(dag.nodes().flat_map(|n| n.members.iter().map(|m| m.text.clone())))?;
    let mut stats = SemanticMergeStats::default();

    let Some(root) = dag.root() else {
        return Err(Error::Argument("semantic merge needs a rooted graph".into()));
    };

    let mut visited: HashSet<NodeId> = HashSet::new();
    let mut stack = vec![root];
    while let Some(p) = stack.pop() {
        if !dag.contains(p) || !visited.insert(p) {
            continue;
        }
        stats.sibling_merges += merge_children(dag, p, &mut embedder, config.t1)?;
        let mut kids: Vec<(String, NodeId)> = dag
            .children(p)
            .iter()
            .filter(|k| !visited.contains(k))
            .map(|&k| (rep(dag, k), k))
            .collect();
        kids.sort();
        stack.extend(kids.into_iter().rev().map(|(_, k)| k));
    }

    let mut edges: Vec<(String, String, NodeId, NodeId)> = dag
        .edges()
        .filter(|&(p, c)| has_members(dag, p) && has_members(dag, c))
        .map(|(p, c)| (rep(dag, p), rep(dag, c), p, c))
        .collect();
    edges.sort();
    let mut forward: HashMap<NodeId, NodeId> = HashMap::new();
    let resolve = |forward: &HashMap<NodeId, NodeId>, mut id: NodeId| {
        while let Some(&next) = forward.get(&id) {
            id = next;
        }
        id
    };
    for (_, _, p, c) in edges {
        let (p, c) = (resolve(&forward, p), resolve(&forward, c));
        if p == c || !dag.has_edge(p, c) || dag.would_create_cycle(p, c) {
            continue;
        }
        if similar(similarity(dag, p, c, &mut embedder)?, config.t2) {
            let m = dag.merge_unchecked(p, c);
            forward.insert(if m == p { c } else { p }, m);
            stats.parent_child_merges += 1;
        }
    }
    Ok(stats)
}

/// Merge nodes whose members name a common ontology concept. A merge that
/// closes a cycle loses every edge entering the merged node from one of its
/// own descendants. Returns the number of merges.
pub fn merge_ontology_synonyms(dag: &mut ConceptDag, ontology: &Ontology) -> usize {
    let root = dag.root();
    let mut by_concept: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
    for node in dag.nodes() {
        if Some(node.id) == root {
            continue;
        }
        for m in &node.members {
            for concept in ontology.concepts_named(&normalize(&m.text)) {
                by_concept.entry(concept.to_string()).or_default().insert(node.id);
            }
        }
    }

    let mut forward: HashMap<NodeId, NodeId> = HashMap::new();
    let resolve = |forward: &HashMap<NodeId, NodeId>, mut id: NodeId| {
        while let Some(&next) = forward.get(&id) {
            id = next;
        }
        id
    };
    let mut merges = 0;
    for nodes in by_concept.values() {
        let current: BTreeSet<NodeId> = nodes.iter().map(|&n| resolve(&forward, n)).collect();
        let mut iter = current.into_iter();
        let Some(mut merged) = iter.next() else { continue };
        for other in iter {
            let m = dag.merge_unchecked(merged, other);
            forward.insert(if m == merged { other } else { merged }, m);
            merged = m;
            merges += 1;
            remove_back_edges(dag, merged);
        }
    }
    dag.attach_orphans();
    merges
}

/// Delete edges `x -> id` where `x` is reachable from `id`.
fn remove_back_edges(dag: &mut ConceptDag, id: NodeId) {
    let below = dag.descendants(id);
    let back: Vec<NodeId> = dag
        .parents(id)
        .iter()
        .copied()
        .filter(|p| below.contains(p))
        .collect();
    for p in back {
        dag.remove_edge(p, id);
    }
}
