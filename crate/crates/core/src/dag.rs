//! The concept DAG and its graph primitives.
//!
//! Nodes are equivalence sets of strings (or synthetic hierarchy nodes), and
//! an edge `A -> B` means `B` is more specific than `A`. Every mutation keeps
//! the graph acyclic; `merge_nodes` refuses merges that would close a cycle.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::embedding::Vector;
use crate::error::{Error, Result};
use crate::expansion::{head_word, AnnotatedSpan};
use crate::grouping::EquivalenceSet;
use crate::textnorm::{lemmatize, normalize, ClassId, LemmaBag, LemmaClassIndex, Lexicon};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where a node came from. The declaration order is the merge precedence:
/// a merged node takes the greater origin of its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Substring,
    Head,
    Taxonomic,
    Input,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub text: String,
    pub count: u64,
    pub is_input: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNode {
    pub id: NodeId,
    pub members: Vec<Member>,
    pub bag: LemmaBag,
    pub origin: Origin,
    /// Cached mean embedding; cleared whenever the member list changes.
    pub vector: Option<Vector>,
    pub representative: Option<String>,
    /// Ontology concept a taxonomic node stands for.
    pub concept: Option<String>,
}

impl ConceptNode {
    pub fn is_input(&self) -> bool {
        self.members.iter().any(|m| m.is_input)
    }

    pub fn total_count(&self) -> u64 {
        self.members.iter().map(|m| m.count).sum()
    }

    pub fn input_member_count(&self) -> usize {
        self.members.iter().filter(|m| m.is_input).count()
    }

    /// The stored representative, or the first member text.
    pub fn label(&self) -> &str {
        self.representative
            .as_deref()
            .or_else(|| self.members.first().map(|m| m.text.as_str()))
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptDag {
    nodes: BTreeMap<NodeId, ConceptNode>,
    children: BTreeMap<NodeId, BTreeSet<NodeId>>,
    parents: BTreeMap<NodeId, BTreeSet<NodeId>>,
    root: Option<NodeId>,
    next_id: u32,
}

static EMPTY: BTreeSet<NodeId> = BTreeSet::new();

impl ConceptDag {
    pub fn new() -> Self {
        ConceptDag::default()
    }

    pub fn add_node(&mut self, members: Vec<Member>, bag: LemmaBag, origin: Origin) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.insert_node(ConceptNode {
            id,
            members,
            bag,
            origin,
            vector: None,
            representative: None,
            concept: None,
        });
        id
    }

    /// Insert a node with a preassigned id (used when loading). Ids must not
    /// repeat; later `add_node` calls continue after the largest id.
    pub fn insert_node(&mut self, node: ConceptNode) {
        let id = node.id;
        self.next_id = self.next_id.max(id.0 + 1);
        self.children.entry(id).or_default();
        self.parents.entry(id).or_default();
        self.nodes.insert(id, node);
    }

    /// The id the next `add_node` call will use.
    pub fn next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn set_next_id(&mut self, next: NodeId) {
        self.next_id = self.next_id.max(next.0);
    }

    pub fn node(&self, id: NodeId) -> Option<&ConceptNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut ConceptNode> {
        self.nodes.get_mut(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ConceptNode> {
        self.nodes.values()
    }

    pub fn nodes_mut(&mut self) -> impl Iterator<Item = &mut ConceptNode> {
        self.nodes.values_mut()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.values().map(BTreeSet::len).sum()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn set_root(&mut self, id: NodeId) {
        self.root = Some(id);
    }

    pub fn children(&self, id: NodeId) -> &BTreeSet<NodeId> {
        self.children.get(&id).unwrap_or(&EMPTY)
    }

    pub fn parents(&self, id: NodeId) -> &BTreeSet<NodeId> {
        self.parents.get(&id).unwrap_or(&EMPTY)
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId) -> bool {
        self.children(parent).contains(&child)
    }

    /// All edges as `(parent, child)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.children
            .iter()
            .flat_map(|(&p, cs)| cs.iter().map(move |&c| (p, c)))
    }

    pub fn edge_set(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.edges().collect()
    }

    /// Add an edge, rejecting unknown nodes, self-edges and cycles. Returns
    /// `false` if the edge already existed.
    pub fn add_edge(&mut self, parent: NodeId, child: NodeId) -> Result<bool> {
        if !self.contains(parent) || !self.contains(child) {
            return Err(Error::Argument(format!("unknown edge endpoint {parent} -> {child}")));
        }
        if parent == child {
            return Err(Error::Argument(format!("self-edge on {parent}")));
        }
        if self.has_edge(parent, child) {
            return Ok(false);
        }
        if self.has_path(child, parent) {
            return Err(Error::Argument(format!("edge {parent} -> {child} would close a cycle")));
        }
        self.link(parent, child);
        Ok(true)
    }

    /// Add an edge the caller knows to be acyclic.
    pub(crate) fn link(&mut self, parent: NodeId, child: NodeId) -> bool {
        debug_assert_ne!(parent, child);
        self.parents.entry(child).or_default().insert(parent);
        self.children.entry(parent).or_default().insert(child)
    }

    pub fn remove_edge(&mut self, parent: NodeId, child: NodeId) -> bool {
        let removed = self
            .children
            .get_mut(&parent)
            .is_some_and(|cs| cs.remove(&child));
        if removed {
            if let Some(ps) = self.parents.get_mut(&child) {
                ps.remove(&parent);
            }
        }
        removed
    }

    pub fn remove_node(&mut self, id: NodeId) -> Option<ConceptNode> {
        let node = self.nodes.remove(&id)?;
        for c in self.children.remove(&id).unwrap_or_default() {
            if let Some(ps) = self.parents.get_mut(&c) {
                ps.remove(&id);
            }
        }
        for p in self.parents.remove(&id).unwrap_or_default() {
            if let Some(cs) = self.children.get_mut(&p) {
                cs.remove(&id);
            }
        }
        if self.root == Some(id) {
            self.root = None;
        }
        Some(node)
    }

    /// True if `to` is reachable from `from` (a node reaches itself).
    pub fn has_path(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::from([from]);
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for &c in self.children(n) {
                if c == to {
                    return true;
                }
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        false
    }

    /// `id` and every node below it.
    pub fn descendants(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.closure(id, |n| self.children(n))
    }

    /// `id` and every node above it.
    pub fn ancestors(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.closure(id, |n| self.parents(n))
    }

    fn closure<'a>(&'a self, id: NodeId, next: impl Fn(NodeId) -> &'a BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        if !self.contains(id) {
            return seen;
        }
        seen.insert(id);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for &m in next(n) {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen
    }

    /// Kahn order, smallest id first among ready nodes. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indegree: BTreeMap<NodeId, usize> =
            self.nodes.keys().map(|&id| (id, self.parents(id).len())).collect();
        let mut ready: BTreeSet<NodeId> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for &c in self.children(n) {
                let d = indegree.get_mut(&c).expect("edge to known node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Ids of nodes with at least one input member, ascending.
    pub fn input_nodes(&self) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.is_input()).map(|n| n.id).collect()
    }

    /// Input nodes reachable from `id`, including `id` itself when it is one.
    pub fn reachable_inputs(&self, id: NodeId) -> Result<BTreeSet<NodeId>> {
        if !self.contains(id) {
            return Err(Error::Argument(format!("unknown node {id}")));
        }
        Ok(self
            .descendants(id)
            .into_iter()
            .filter(|&n| self.nodes[&n].is_input())
            .collect())
    }

    /// True iff a path of length two or more joins `a` and `b` in either
    /// direction. A direct edge alone is absorbed by the merge.
    pub fn would_create_cycle(&self, a: NodeId, b: NodeId) -> bool {
        self.long_path(a, b) || self.long_path(b, a)
    }

    fn long_path(&self, from: NodeId, to: NodeId) -> bool {
        self.children(from)
            .iter()
            .filter(|&&c| c != to)
            .any(|&c| self.has_path(c, to))
    }

    /// Merge `a` and `b` into the node with the smaller id.
    pub fn merge_nodes(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if a == b {
            return Err(Error::Argument(format!("cannot merge node {a} with itself")));
        }
        for id in [a, b] {
            if !self.contains(id) {
                return Err(Error::Argument(format!("unknown node {id}")));
            }
            if self.root == Some(id) {
                return Err(Error::MergeRejected { a: a.0, b: b.0, reason: "root cannot be merged" });
            }
        }
        if self.would_create_cycle(a, b) {
            return Err(Error::MergeRejected { a: a.0, b: b.0, reason: "merge would create a cycle" });
        }
        Ok(self.merge_unchecked(a, b))
    }

    /// Merge without the cycle check; the caller repairs any cycle.
    pub(crate) fn merge_unchecked(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (keep, gone) = (a.min(b), a.max(b));
        let absorbed = self.nodes.remove(&gone).expect("merge of known node");
        let node = self.nodes.get_mut(&keep).expect("merge of known node");
        for m in absorbed.members {
            let key = normalize(&m.text);
            match node.members.iter_mut().find(|x| normalize(&x.text) == key) {
                Some(x) => {
                    x.is_input |= m.is_input;
                    x.count = x.count.max(m.count);
                }
                None => node.members.push(m),
            }
        }
        node.bag = node.bag.union(&absorbed.bag);
        node.origin = node.origin.max(absorbed.origin);
        node.concept = node.concept.take().or(absorbed.concept);
        node.vector = None;
        node.representative = None;

        let parents = self.parents.remove(&gone).unwrap_or_default();
        let children = self.children.remove(&gone).unwrap_or_default();
        for p in parents {
            if let Some(cs) = self.children.get_mut(&p) {
                cs.remove(&gone);
            }
            if p != keep {
                self.link(p, keep);
            }
        }
        for c in children {
            if let Some(ps) = self.parents.get_mut(&c) {
                ps.remove(&gone);
            }
            if c != keep {
                self.link(keep, c);
            }
        }
        keep
    }

    /// Connect every parentless non-root node to the root.
    pub fn attach_orphans(&mut self) {
        let Some(root) = self.root else { return };
        let orphans: Vec<NodeId> = self
            .nodes
            .keys()
            .copied()
            .filter(|&id| id != root && self.parents(id).is_empty())
            .collect();
        for id in orphans {
            self.link(root, id);
        }
    }

    /// Delete nodes that cannot be reached from the root.
    pub fn remove_unreachable(&mut self) -> Vec<NodeId> {
        let Some(root) = self.root else { return Vec::new() };
        let keep = self.descendants(root);
        let gone: Vec<NodeId> = self.nodes.keys().copied().filter(|id| !keep.contains(id)).collect();
        for &id in &gone {
            self.remove_node(id);
        }
        gone
    }

    /// Structural invariants: acyclic, and when rooted, a single parentless
    /// node from which everything is reachable.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !self.is_acyclic() {
            return Err("graph has a cycle".into());
        }
        for (p, c) in self.edges() {
            if p == c {
                return Err(format!("self-edge on {p}"));
            }
            if !self.parents(c).contains(&p) {
                return Err(format!("edge {p} -> {c} missing from parent index"));
            }
        }
        if let Some(root) = self.root {
            if !self.parents(root).is_empty() {
                return Err("root has parents".into());
            }
            let reach = self.descendants(root);
            if let Some(lost) = self.nodes.keys().find(|id| !reach.contains(id)) {
                return Err(format!("node {lost} unreachable from root"));
            }
        }
        Ok(())
    }
}

/// Reachable-input sets of every node, computed once as bitsets.
#[derive(Debug, Clone)]
pub struct Reachability {
    inputs: Vec<NodeId>,
    bits: HashMap<NodeId, FixedBitSet>,
}

impl Reachability {
    pub fn new(dag: &ConceptDag) -> Self {
        let inputs = dag.input_nodes();
        let position: HashMap<NodeId, usize> = inputs.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let order = dag.topological_order().expect("reachability needs an acyclic graph");
        let mut bits: HashMap<NodeId, FixedBitSet> = HashMap::with_capacity(order.len());
        for &id in order.iter().rev() {
            let mut set = FixedBitSet::with_capacity(inputs.len());
            if let Some(&p) = position.get(&id) {
                set.insert(p);
            }
            for c in dag.children(id) {
                set.union_with(&bits[c]);
            }
            bits.insert(id, set);
        }
        Reachability { inputs, bits }
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn bits(&self, id: NodeId) -> Option<&FixedBitSet> {
        self.bits.get(&id)
    }

    pub fn count(&self, id: NodeId) -> usize {
        self.bits.get(&id).map_or(0, |b| b.count_ones(..))
    }

    pub fn of(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.bits
            .get(&id)
            .map(|b| b.ones().map(|i| self.inputs[i]).collect())
            .unwrap_or_default()
    }
}

fn members_of(set: &EquivalenceSet) -> Vec<Member> {
    set.members
        .iter()
        .map(|s| Member {
            text: s.text.clone(),
            count: s.count,
            is_input: s.is_input,
        })
        .collect()
}

/// One node per equivalence set and the Hasse diagram of strict bag
/// containment as edges. Empty-bag sets take no part in the order.
pub fn build_dag(sets: &[EquivalenceSet]) -> ConceptDag {
    let mut dag = ConceptDag::new();
    let ids: Vec<NodeId> = sets
        .iter()
        .map(|s| {
            let origin = if s.is_input { Origin::Input } else { Origin::Substring };
            dag.add_node(members_of(s), s.bag.clone(), origin)
        })
        .collect();

    let mut postings: HashMap<&ClassId, Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for c in s.bag.iter() {
            postings.entry(c).or_default().push(i);
        }
    }

    for (j, upper) in sets.iter().enumerate() {
        if upper.bag.is_empty() {
            continue;
        }
        // Sets whose every class occurs in `upper` are its subsets.
        let mut hits: HashMap<usize, usize> = HashMap::new();
        for c in upper.bag.iter() {
            for &i in &postings[c] {
                *hits.entry(i).or_default() += 1;
            }
        }
        let mut below: Vec<usize> = hits
            .into_iter()
            .filter(|&(i, n)| i != j && n == sets[i].bag.len() && n < upper.bag.len())
            .map(|(i, _)| i)
            .collect();
        below.sort_by_key(|&i| (std::cmp::Reverse(sets[i].bag.len()), i));
        for (k, &i) in below.iter().enumerate() {
            let covered = below[..k]
                .iter()
                .any(|&m| sets[i].bag.is_proper_subset(&sets[m].bag));
            if !covered {
                dag.link(ids[i], ids[j]);
            }
        }
    }
    dag
}

/// Head-word lemma class of every span, with the head form that introduced
/// it. Heads whose lemma is filtered out (stopwords etc.) are skipped.
pub fn head_classes(
    spans: &[AnnotatedSpan],
    lexicon: &Lexicon,
    index: &LemmaClassIndex,
) -> Result<BTreeMap<ClassId, String>> {
    let mut heads = BTreeMap::new();
    for span in spans {
        let word = head_word(span, lexicon)?;
        let lemma = lemmatize(&word, lexicon);
        if lexicon.is_stopword(&word) || lexicon.is_modal(&word) || lexicon.is_quantity(&word) {
            continue;
        }
        heads
            .entry(index.class_of(&lemma))
            .or_insert_with(|| word.to_lowercase());
    }
    Ok(heads)
}

/// Ensure a singleton-bag node for every head class, wire it above the
/// minimal nodes containing that class, and put one root above all
/// parentless nodes. Returns the ids of newly created head nodes.
pub fn add_head_roots(dag: &mut ConceptDag, heads: &BTreeMap<ClassId, String>) -> Vec<NodeId> {
    let mut singletons: HashMap<LemmaBag, NodeId> = HashMap::new();
    let mut postings: HashMap<ClassId, Vec<NodeId>> = HashMap::new();
    for node in dag.nodes() {
        if node.bag.len() == 1 {
            singletons.insert(node.bag.clone(), node.id);
        }
        for c in node.bag.iter() {
            postings.entry(c.clone()).or_default().push(node.id);
        }
    }

    let mut created = Vec::new();
    for (class, word) in heads {
        let bag = LemmaBag::singleton(class.clone());
        if singletons.contains_key(&bag) {
            continue;
        }
        let member = Member {
            text: word.clone(),
            count: 0,
            is_input: false,
        };
        let head = dag.add_node(vec![member], bag.clone(), Origin::Head);
        singletons.insert(bag, head);
        created.push(head);
        for &v in postings.get(class).into_iter().flatten() {
            let minimal = dag
                .parents(v)
                .iter()
                .all(|&p| !dag.node(p).is_some_and(|n| n.bag.contains(class)));
            if minimal {
                dag.link(head, v);
            }
        }
    }

    let root = match dag.root() {
        Some(r) => r,
        None => {
            let r = dag.add_node(Vec::new(), LemmaBag::new(), Origin::Root);
            dag.node_mut(r).expect("just added").representative = Some("root".into());
            dag.set_root(r);
            r
        }
    };
    debug_assert!(dag.contains(root));
    dag.attach_orphans();
    created
}
