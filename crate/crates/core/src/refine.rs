//! Pruning, entry-point selection and display ordering.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::dag::{ConceptDag, ConceptNode, NodeId, Origin, Reachability};
use crate::embedding::{cosine, Embedder, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::semantic::node_vector;

const SCORE_EPS: f64 = 1e-9;

/// Display string: taxonomic nodes keep their concept label; otherwise an
/// input member beats a derived one, then higher count, shorter text and
/// lexicographic order.
pub fn choose_representative(node: &ConceptNode) -> String {
    if node.origin == Origin::Root {
        return "root".into();
    }
    if node.origin == Origin::Taxonomic {
        if let Some(label) = &node.representative {
            return label.clone();
        }
    }
    let any_input = node.members.iter().any(|m| m.is_input);
    node.members
        .iter()
        .filter(|m| m.is_input || !any_input)
        .min_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then(a.text.chars().count().cmp(&b.text.chars().count()))
                .then(a.text.cmp(&b.text))
        })
        .map(|m| m.text.clone())
        .unwrap_or_default()
}

/// Store `choose_representative` on every node.
pub fn assign_representatives(dag: &mut ConceptDag) {
    for node in dag.nodes_mut() {
        let rep = choose_representative(node);
        node.representative = Some(rep);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverCandidate {
    pub covers: FixedBitSet,
    pub total_count: u64,
    pub representative: String,
}

/// Greedy set cover of `universe`. Each step takes the candidate adding the
/// most uncovered elements; ties go to the larger total count, then the
/// smaller representative, then the earlier candidate. Stops when nothing
/// more can be covered. Returns candidate indices in selection order.
pub fn greedy_set_cover(universe: &FixedBitSet, candidates: &[CoverCandidate]) -> Vec<usize> {
    let mut uncovered = universe.clone();
    let mut used = vec![false; candidates.len()];
    let mut picked = Vec::new();
    while !uncovered.is_clear() {
        let mut best: Option<(usize, usize)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let gain = c.covers.intersection_count(&uncovered);
            if gain == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((g, j)) => {
                    let o = &candidates[j];
                    gain.cmp(&g)
                        .then(c.total_count.cmp(&o.total_count))
                        .then(o.representative.cmp(&c.representative))
                        == Ordering::Greater
                }
            };
            if better {
                best = Some((gain, i));
            }
        }
        let Some((_, i)) = best else { break };
        used[i] = true;
        uncovered.difference_with(&candidates[i].covers);
        picked.push(i);
    }
    picked
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub edges_removed: usize,
    pub nodes_removed: usize,
}

/// Keep, for every node, a greedy minimal set of children that still
/// reaches all inputs the node reached, then drop nodes cut off from the
/// root.
pub fn prune_children(dag: &mut ConceptDag) -> PruneStats {
    let Some(order) = dag.topological_order() else {
        return PruneStats::default();
    };
    let reach = Reachability::new(dag);
    let position: BTreeMap<NodeId, usize> =
        reach.inputs().iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut stats = PruneStats::default();
    for p in order {
        let kids: Vec<NodeId> = dag.children(p).iter().copied().collect();
        if kids.len() < 2 {
            continue;
        }
        let mut universe = reach.bits(p).cloned().unwrap_or_default();
        if let Some(&i) = position.get(&p) {
            universe.set(i, false);
        }
        let candidates: Vec<CoverCandidate> = kids
            .iter()
            .map(|&k| {
                let node = dag.node(k).expect("child exists");
                CoverCandidate {
                    covers: reach.bits(k).cloned().unwrap_or_default(),
                    total_count: node.total_count(),
                    representative: choose_representative(node),
                }
            })
            .collect();
        let keep: BTreeSet<usize> = greedy_set_cover(&universe, &candidates).into_iter().collect();
        for (i, &k) in kids.iter().enumerate() {
            if !keep.contains(&i) {
                dag.remove_edge(p, k);
                stats.edges_removed += 1;
            }
        }
    }
    let edges_before = dag.edge_count();
    stats.nodes_removed = dag.remove_unreachable().len();
    stats.edges_removed += edges_before - dag.edge_count();
    stats
}

/// Remove every non-root node without input members that has exactly one
/// child, wiring its parents to that child. Returns the removed ids.
pub fn collapse_single_child(dag: &mut ConceptDag) -> Vec<NodeId> {
    let mut removed = Vec::new();
    loop {
        let target = dag.node_ids().find(|&id| {
            Some(id) != dag.root()
                && dag.children(id).len() == 1
                && !dag.node(id).is_some_and(|n| n.is_input())
        });
        let Some(id) = target else { break };
        let child = *dag.children(id).iter().next().expect("one child");
        let parents: Vec<NodeId> = dag.parents(id).iter().copied().collect();
        dag.remove_node(id);
        for p in parents {
            dag.link(p, child);
        }
        removed.push(id);
    }
    removed
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryPointConfig {
    pub k: usize,
    pub affinity_floor: f64,
}

impl Default for EntryPointConfig {
    fn default() -> Self {
        EntryPointConfig { k: 50, affinity_floor: 0.0 }
    }
}

impl EntryPointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if !self.affinity_floor.is_finite() {
            return Err(Error::Argument("affinity_floor must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtherNode {
    pub id: NodeId,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationResult {
    pub entry_points: Vec<NodeId>,
    pub other_node: OtherNode,
    pub display_order: BTreeMap<NodeId, Vec<NodeId>>,
}

impl NavigationResult {
    /// Children of `id` as shown, including the synthetic other node.
    pub fn children_of(&self, id: NodeId) -> &[NodeId] {
        if id == self.other_node.id {
            return &self.other_node.children;
        }
        self.display_order.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn sort_key(dag: &ConceptDag, reach: &Reachability, id: NodeId) -> (Reverse<usize>, Reverse<u64>, String, NodeId) {
    let node = dag.node(id).expect("node exists");
    (
        Reverse(reach.count(id)),
        Reverse(node.total_count()),
        choose_representative(node),
        id,
    )
}

/// Sort `ids` by descending reachable inputs, descending total count, then
/// representative.
pub fn sort_for_display(dag: &ConceptDag, reach: &Reachability, ids: &mut [NodeId]) {
    ids.sort_by_cached_key(|&id| sort_key(dag, reach, id));
}

/// Ordered child lists of every node with children.
pub fn display_order(dag: &ConceptDag) -> BTreeMap<NodeId, Vec<NodeId>> {
    let reach = Reachability::new(dag);
    dag.node_ids()
        .filter(|&id| !dag.children(id).is_empty())
        .map(|id| {
            let mut kids: Vec<NodeId> = dag.children(id).iter().copied().collect();
            sort_for_display(dag, &reach, &mut kids);
            (id, kids)
        })
        .collect()
}

/// Greedy selection of up to `k` entry points. A candidate's score is the
/// sum of its affinities to the inputs it reaches; after each pick, every
/// remaining candidate loses the picked node's affinities to the inputs
/// both reach. Only positive scores are picked. Inputs left uncovered go
/// under the synthetic other node, whose id is the graph's next free id.
pub fn select_entry_points(
    dag: &mut ConceptDag,
    provider: &dyn EmbeddingProvider,
    config: &EntryPointConfig,
) -> Result<NavigationResult> {
    config.validate()?;
    let mut embedder = Embedder::new(provider);
    embedder.prefetch(dag.nodes().flat_map(|n| n.members.iter().map(|m| m.text.clone())))?;
    let reach = Reachability::new(dag);
    let inputs = reach.inputs().to_vec();
    let root = dag.root();

    let mut input_vectors = Vec::with_capacity(inputs.len());
    for &v in &inputs {
        input_vectors.push(node_vector(dag, v, &mut embedder)?);
    }

    struct Candidate {
        id: NodeId,
        reach: usize,
        rep: String,
        score: f64,
    }
    let ids: Vec<NodeId> = dag.node_ids().filter(|&id| Some(id) != root).collect();
    let mut candidates = Vec::with_capacity(ids.len());
    for id in ids {
        let cv = node_vector(dag, id, &mut embedder)?;
        let bits = reach.bits(id).expect("reachability covers every node");
        let score = bits
            .ones()
            .map(|i| cosine(&cv, &input_vectors[i]).max(config.affinity_floor))
            .sum();
        candidates.push(Candidate {
            id,
            reach: bits.count_ones(..),
            rep: choose_representative(dag.node(id).expect("node exists")),
            score,
        });
    }

    let mut entry_points = Vec::new();
    let mut covered = FixedBitSet::with_capacity(inputs.len());
    while entry_points.len() < config.k {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            if c.score <= SCORE_EPS {
                continue;
            }
            let better = match best {
                None => true,
                Some(j) => {
                    let o = &candidates[j];
                    if (c.score - o.score).abs() > SCORE_EPS {
                        c.score > o.score
                    } else {
                        (Reverse(c.reach), &c.rep, c.id) < (Reverse(o.reach), &o.rep, o.id)
                    }
                }
            };
            if better {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        let picked = candidates.swap_remove(i);
        let pv = node_vector(dag, picked.id, &mut embedder)?;
        let pbits = reach.bits(picked.id).expect("reachability covers every node");
        let mut affinity = vec![0.0; inputs.len()];
        for j in pbits.ones() {
            affinity[j] = cosine(&pv, &input_vectors[j]).max(config.affinity_floor);
        }
        for c in candidates.iter_mut() {
            let bits = reach.bits(c.id).expect("reachability covers every node");
            c.score -= bits.intersection(pbits).map(|j| affinity[j]).sum::<f64>();
        }
        covered.union_with(pbits);
        entry_points.push(picked.id);
    }

    let mut uncovered: Vec<NodeId> = (0..inputs.len())
        .filter(|&i| !covered.contains(i))
        .map(|i| inputs[i])
        .collect();
    sort_for_display(dag, &reach, &mut uncovered);
    Ok(NavigationResult {
        entry_points,
        other_node: OtherNode {
            id: dag.next_id(),
            children: uncovered,
        },
        display_order: display_order(dag),
    })
}
