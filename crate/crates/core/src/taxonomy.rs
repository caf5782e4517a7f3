//! Ontology linking and taxonomic hierarchy nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::{ConceptDag, Member, NodeId, Origin};
use crate::embedding::{cosine, Embedder, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::semantic::node_vector;
use crate::textnorm::{normalize, LemmaBag};

/// One record of the ontology subset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub preferred: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
}

impl Concept {
    /// Preferred name followed by the synonyms, without repeats.
    pub fn names(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        std::iter::once(self.preferred.as_str())
            .chain(self.synonyms.iter().map(String::as_str))
            .filter(|n| seen.insert(normalize(n)))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    concepts: BTreeMap<String, Concept>,
    name_index: HashMap<String, BTreeSet<String>>,
}

impl Ontology {
    /// Index `concepts`, rejecting duplicate ids, dangling parents and
    /// parent cycles.
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        let mut onto = Ontology::default();
        for c in concepts {
            if onto.concepts.contains_key(&c.id) {
                return Err(Error::Argument(format!("duplicate concept id {}", c.id)));
            }
            onto.concepts.insert(c.id.clone(), c);
        }
        for c in onto.concepts.values() {
            for p in &c.parents {
                if !onto.concepts.contains_key(p) {
                    return Err(Error::Argument(format!("concept {} has unknown parent {p}", c.id)));
                }
            }
            for name in c.names() {
                onto.name_index
                    .entry(normalize(name))
                    .or_default()
                    .insert(c.id.clone());
            }
        }
        onto.check_acyclic()?;
        Ok(onto)
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        for start in self.concepts.keys() {
            if state.contains_key(start.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
            state.insert(start, 1);
            while let Some((id, i)) = stack.pop() {
                let parents = &self.concepts[id].parents;
                if i < parents.len() {
                    stack.push((id, i + 1));
                    let p = parents[i].as_str();
                    match state.get(p) {
                        Some(1) => {
                            return Err(Error::Argument(format!("ontology parent cycle through {p}")))
                        }
                        Some(_) => {}
                        None => {
                            state.insert(p, 1);
                            stack.push((p, 0));
                        }
                    }
                } else {
                    state.insert(id, 2);
                }
            }
        }
        Ok(())
    }

    /// Load one JSON concept record per line. Blank lines and `#` comments
    /// are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Resource {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut concepts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let concept: Concept = serde_json::from_str(line)
                .map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
            concepts.push(concept);
        }
        Self::new(concepts)
    }

    pub fn concept(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts with a name equal to the already-normalized `name`, in
    /// ascending id order.
    pub fn concepts_named(&self, name: &str) -> impl Iterator<Item = &str> {
        self.name_index
            .get(name)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    /// `id` and its ancestors up to `depth` parent hops.
    pub fn ancestors_within(&self, id: &str, depth: usize) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([id.to_string()]);
        let mut frontier = vec![id.to_string()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for c in &frontier {
                for p in self.concepts.get(c).map(|c| c.parents.as_slice()).unwrap_or(&[]) {
                    if seen.insert(p.clone()) {
                        next.push(p.clone());
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for c in self.concepts.values() {
            hasher.update(serde_json::to_string(c).expect("concept serializes").as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    pub max_ancestor_depth: usize,
    pub min_governed: usize,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            max_ancestor_depth: 3,
            min_governed: 2,
        }
    }
}

impl TaxonomyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_ancestor_depth == 0 || self.min_governed < 2 {
            return Err(Error::Argument(format!(
                "taxonomy needs max_ancestor_depth >= 1 and min_governed >= 2, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Exact-match linking of nodes to concepts. A node stands for the smallest
/// concept id any of its members names; taxonomic nodes keep their concept.
pub fn link_nodes(dag: &ConceptDag, ontology: &Ontology) -> BTreeMap<NodeId, String> {
    let mut links = BTreeMap::new();
    for node in dag.nodes() {
        if Some(node.id) == dag.root() {
            continue;
        }
        let linked = node.concept.clone().or_else(|| {
            node.members
                .iter()
                .filter_map(|m| ontology.concepts_named(&normalize(&m.text)).next())
                .min()
                .map(str::to_string)
        });
        if let Some(c) = linked {
            links.insert(node.id, c);
        }
    }
    links
}

/// Concepts that govern at least `min_governed` linked nodes, where a
/// concept governs a node if it is the node's concept or one of its
/// ancestors within `max_ancestor_depth` hops. Ordered by concept id.
pub fn governing_concepts(
    links: &BTreeMap<NodeId, String>,
    ontology: &Ontology,
    config: &TaxonomyConfig,
) -> Vec<(String, BTreeSet<NodeId>)> {
    let mut governed: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
    for (&node, concept) in links {
        for g in ontology.ancestors_within(concept, config.max_ancestor_depth) {
            governed.entry(g).or_default().insert(node);
        }
    }
    governed
        .into_iter()
        .filter(|(_, nodes)| nodes.len() >= config.min_governed)
        .collect()
}

/// The concept name with the highest mean cosine to the governed nodes;
/// ties go to the shorter, then lexicographically smaller, name.
pub fn choose_label(
    concept: &Concept,
    governed: &BTreeSet<NodeId>,
    dag: &mut ConceptDag,
    embedder: &mut Embedder,
) -> Result<String> {
    let names = concept.names();
    embedder.prefetch(names.iter().copied())?;
    let mut node_vectors = Vec::with_capacity(governed.len());
    for &v in governed {
        node_vectors.push(node_vector(dag, v, embedder)?);
    }
    let mut best: Option<(f64, &str)> = None;
    for name in names {
        let nv = embedder.text_vector(name)?;
        let score = if node_vectors.is_empty() {
            0.0
        } else {
            node_vectors.iter().map(|v| cosine(&nv, v)).sum::<f64>() / node_vectors.len() as f64
        };
        let better = match best {
            None => true,
            Some((s, b)) => {
                if (score - s).abs() > 1e-12 {
                    score > s
                } else {
                    (name.chars().count(), name) < (b.chars().count(), b)
                }
            }
        };
        if better {
            best = Some((score, name));
        }
    }
    best.map(|(_, n)| n.to_string())
        .ok_or_else(|| Error::Argument(format!("concept {} has no names", concept.id)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyStats {
    pub nodes_added: usize,
    pub edges_added: usize,
}

/// Add hierarchy from the ontology: concepts already present gain edges to
/// the nodes they govern, absent ones become new taxonomic nodes under the
/// root. Taxonomic nodes themselves are never counted as governed.
pub fn add_taxonomic_nodes(
    dag: &mut ConceptDag,
    ontology: &Ontology,
    links: &BTreeMap<NodeId, String>,
    provider: &dyn EmbeddingProvider,
    config: &TaxonomyConfig,
) -> Result<TaxonomyStats> {
    config.validate()?;
    let root = dag
        .root()
        .ok_or_else(|| Error::Argument("taxonomy needs a rooted graph".into()))?;
    let governable: BTreeMap<NodeId, String> = links
        .iter()
        .filter(|(id, _)| dag.node(**id).is_some_and(|n| n.origin != Origin::Taxonomic))
        .map(|(&id, c)| (id, c.clone()))
        .collect();
    let mut anchors: BTreeMap<String, NodeId> = BTreeMap::new();
    for (&id, c) in links {
        anchors.entry(c.clone()).or_insert(id);
    }

    let mut embedder = Embedder::new(provider);
    let mut stats = TaxonomyStats::default();
    for (concept_id, governed) in governing_concepts(&governable, ontology, config) {
        if let Some(&anchor) = anchors.get(&concept_id) {
            for &v in &governed {
                if v != anchor && !dag.has_path(anchor, v) && !dag.has_path(v, anchor) {
                    dag.link(anchor, v);
                    stats.edges_added += 1;
                }
            }
            continue;
        }
        let concept = ontology
            .concept(&concept_id)
            .expect("governing concept comes from the ontology");
        let label = choose_label(concept, &governed, dag, &mut embedder)?;
        let member = Member {
            text: label.clone(),
            count: 0,
            is_input: false,
        };
        let node = dag.add_node(vec![member], LemmaBag::new(), Origin::Taxonomic);
        {
            let n = dag.node_mut(node).expect("just added");
            n.concept = Some(concept_id.clone());
            n.representative = Some(label);
        }
        dag.link(root, node);
        for &v in &governed {
            dag.link(node, v);
        }
        stats.nodes_added += 1;
        stats.edges_added += governed.len() + 1;
        anchors.insert(concept_id, node);
    }
    Ok(stats)
}
