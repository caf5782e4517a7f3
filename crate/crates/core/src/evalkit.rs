//! Graph statistics, click effort, target coverage and per-stage audits.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dag::{ConceptDag, NodeId, Origin};
use crate::refine::NavigationResult;
use crate::textnorm::{build_class_index, content_lemmas, normalize, to_bag, LemmaBag, LemmaClassIndex, Lexicon};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population variance.
    pub variance: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        Summary {
            count: values.len(),
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            variance: values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DagMetrics {
    /// Nodes other than the root.
    pub node_count: usize,
    pub edge_count: usize,
    pub entry_count: usize,
    pub max_depth: usize,
    pub leaves_per_entry: Summary,
    pub depth_per_entry: Summary,
    /// Over non-root nodes with children that lie below an entry point.
    pub children_per_internal: Summary,
}

fn longest_paths(dag: &ConceptDag) -> HashMap<NodeId, usize> {
    let order = dag.topological_order().expect("metrics need an acyclic graph");
    let mut depth: HashMap<NodeId, usize> = HashMap::with_capacity(order.len());
    for &id in order.iter().rev() {
        let d = dag
            .children(id)
            .iter()
            .map(|c| depth[c] + 1)
            .max()
            .unwrap_or(0);
        depth.insert(id, d);
    }
    depth
}

pub fn graph_metrics(dag: &ConceptDag, nav: &NavigationResult) -> DagMetrics {
    let root = dag.root();
    let depth = longest_paths(dag);
    let mut below = BTreeSet::new();
    let mut leaves = Vec::new();
    let mut depths = Vec::new();
    for &e in &nav.entry_points {
        let reach = dag.descendants(e);
        leaves.push(
            reach
                .iter()
                .filter(|&&n| dag.children(n).is_empty() && dag.node(n).is_some_and(|n| n.is_input()))
                .count() as f64,
        );
        depths.push(depth[&e] as f64);
        below.extend(reach);
    }
    let fanout: Vec<f64> = below
        .iter()
        .filter(|&&n| Some(n) != root && !dag.children(n).is_empty())
        .map(|&n| dag.children(n).len() as f64)
        .collect();
    DagMetrics {
        node_count: dag.node_ids().filter(|&n| Some(n) != root).count(),
        edge_count: dag.edge_count(),
        entry_count: nav.entry_points.len(),
        max_depth: depths.iter().copied().fold(0.0, f64::max) as usize,
        leaves_per_entry: Summary::of(&leaves),
        depth_per_entry: Summary::of(&depths),
        children_per_internal: Summary::of(&fanout),
    }
}

/// Class index over every member lemma of `dag` plus the lemmas of
/// `targets`, for graphs loaded from disk without bags.
pub fn evaluation_index<S: AsRef<str>>(dag: &ConceptDag, targets: &[S], lexicon: &Lexicon) -> LemmaClassIndex {
    let member_lemmas = dag
        .nodes()
        .flat_map(|n| n.members.iter())
        .flat_map(|m| content_lemmas(&m.text, lexicon));
    let target_lemmas = targets.iter().flat_map(|t| content_lemmas(t.as_ref(), lexicon));
    build_class_index(member_lemmas.chain(target_lemmas).collect::<Vec<_>>(), lexicon)
}

/// Lookup from target strings to nodes by lemma bag or member text.
#[derive(Debug, Clone)]
pub struct TargetMatcher<'a> {
    lexicon: &'a Lexicon,
    index: &'a LemmaClassIndex,
    by_bag: HashMap<LemmaBag, BTreeSet<NodeId>>,
    by_text: HashMap<String, BTreeSet<NodeId>>,
}

impl<'a> TargetMatcher<'a> {
    pub fn new(dag: &ConceptDag, lexicon: &'a Lexicon, index: &'a LemmaClassIndex) -> Self {
        let mut by_bag: HashMap<LemmaBag, BTreeSet<NodeId>> = HashMap::new();
        let mut by_text: HashMap<String, BTreeSet<NodeId>> = HashMap::new();
        for node in dag.nodes() {
            if node.origin == Origin::Root {
                continue;
            }
            if !node.bag.is_empty() {
                by_bag.entry(node.bag.clone()).or_default().insert(node.id);
            }
            for m in &node.members {
                by_text.entry(normalize(&m.text)).or_default().insert(node.id);
                let bag = to_bag(&m.text, lexicon, index);
                if !bag.is_empty() {
                    by_bag.entry(bag).or_default().insert(node.id);
                }
            }
        }
        TargetMatcher { lexicon, index, by_bag, by_text }
    }

    pub fn matches(&self, target: &str) -> BTreeSet<NodeId> {
        let mut out = self.by_text.get(&normalize(target)).cloned().unwrap_or_default();
        let bag = to_bag(target, self.lexicon, self.index);
        if !bag.is_empty() {
            out.extend(self.by_bag.get(&bag).into_iter().flatten());
        }
        out
    }
}

/// Nodes whose bag, or any member's bag, equals the target's bag, or with a
/// member that normalizes to the target text.
pub fn match_target(dag: &ConceptDag, target: &str, lexicon: &Lexicon, index: &LemmaClassIndex) -> BTreeSet<NodeId> {
    TargetMatcher::new(dag, lexicon, index).matches(target)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedInput {
    pub text: String,
    pub count: u64,
    pub node: NodeId,
}

/// Input strings by descending count, then text. Each normalized string
/// appears once.
pub fn flat_ranking(dag: &ConceptDag) -> Vec<RankedInput> {
    let mut best: BTreeMap<String, RankedInput> = BTreeMap::new();
    for node in dag.nodes() {
        for m in node.members.iter().filter(|m| m.is_input) {
            let key = normalize(&m.text);
            let entry = RankedInput { text: key.clone(), count: m.count, node: node.id };
            match best.get(&key) {
                Some(e) if (Reverse(e.count), e.node) <= (Reverse(m.count), node.id) => {}
                _ => {
                    best.insert(key, entry);
                }
            }
        }
    }
    let mut ranking: Vec<RankedInput> = best.into_values().collect();
    ranking.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
    ranking
}

/// 1-based rank of the first ranked string accepted by `accept`.
pub fn flat_effort(ranking: &[RankedInput], accept: impl Fn(&RankedInput) -> bool) -> Option<usize> {
    ranking.iter().position(accept).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEffort {
    pub effort: usize,
    /// From the top-level item (an entry point or the other node) down to
    /// the target.
    pub path: Vec<NodeId>,
}

/// Cheapest way to reach any node of `targets`: reading the top list down
/// to the item costs its 1-based position, and every expansion costs one
/// click plus the position of the next item in the expanded list. The
/// other node sits after the entry points.
pub fn dag_effort(nav: &NavigationResult, targets: &BTreeSet<NodeId>) -> Option<PathEffort> {
    if targets.is_empty() {
        return None;
    }
    let mut dist: HashMap<NodeId, usize> = HashMap::new();
    let mut prev: HashMap<NodeId, NodeId> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut top: Vec<NodeId> = nav.entry_points.clone();
    if !nav.other_node.children.is_empty() {
        top.push(nav.other_node.id);
    }
    for (i, &id) in top.iter().enumerate() {
        let cost = i + 1;
        if dist.get(&id).is_none_or(|&d| cost < d) {
            dist.insert(id, cost);
            heap.push(Reverse((cost, id)));
        }
    }
    while let Some(Reverse((cost, id))) = heap.pop() {
        if dist[&id] < cost {
            continue;
        }
        if targets.contains(&id) {
            let mut path = vec![id];
            let mut cur = id;
            while let Some(&p) = prev.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(PathEffort { effort: cost, path });
        }
        for (j, &c) in nav.children_of(id).iter().enumerate() {
            let next = cost + 1 + j + 1;
            if dist.get(&c).is_none_or(|&d| next < d) {
                dist.insert(c, next);
                prev.insert(c, id);
                heap.push(Reverse((next, c)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub targets: usize,
    pub present: usize,
    pub reachable_from_entries: usize,
}

/// `matches[i]` are the nodes matched by target i. A target is reachable
/// when one of its nodes lies below an entry point; the other node does
/// not count.
pub fn coverage(dag: &ConceptDag, nav: &NavigationResult, matches: &[BTreeSet<NodeId>]) -> Coverage {
    let mut below = BTreeSet::new();
    for &e in &nav.entry_points {
        if dag.contains(e) {
            below.extend(dag.descendants(e));
        }
    }
    Coverage {
        targets: matches.len(),
        present: matches.iter().filter(|m| !m.is_empty()).count(),
        reachable_from_entries: matches
            .iter()
            .filter(|m| m.iter().any(|n| below.contains(n)))
            .count(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetEffort {
    pub target: String,
    pub found: bool,
    pub flat_effort: Option<usize>,
    pub dag_effort: Option<usize>,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffortReport {
    pub targets: Vec<TargetEffort>,
    pub coverage: Coverage,
}

/// Flat and graph effort for every target plus coverage.
pub fn evaluate<S: AsRef<str>>(
    dag: &ConceptDag,
    nav: &NavigationResult,
    targets: &[S],
    lexicon: &Lexicon,
    index: &LemmaClassIndex,
) -> EffortReport {
    let matcher = TargetMatcher::new(dag, lexicon, index);
    let ranking = flat_ranking(dag);
    let mut rows = Vec::with_capacity(targets.len());
    let mut all = Vec::with_capacity(targets.len());
    for t in targets {
        let t = t.as_ref();
        let nodes = matcher.matches(t);
        // In the flat list a target is recognized through any input string
        // at or below a matched node.
        let accepted: BTreeSet<NodeId> = nodes
            .iter()
            .filter_map(|&n| dag.reachable_inputs(n).ok())
            .flatten()
            .collect();
        let flat = flat_effort(&ranking, |r| accepted.contains(&r.node));
        let best = dag_effort(nav, &nodes);
        rows.push(TargetEffort {
            target: t.to_string(),
            found: !nodes.is_empty(),
            flat_effort: flat,
            dag_effort: best.as_ref().map(|b| b.effort),
            path: best.map(|b| b.path).unwrap_or_default(),
        });
        all.push(nodes);
    }
    EffortReport {
        targets: rows,
        coverage: coverage(dag, nav, &all),
    }
}

/// Target file: one string per line, blank lines and `#` comments skipped.
pub fn parse_targets(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Node and edge changes made by one pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAudit {
    pub stage: String,
    pub enabled: bool,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub edges_before: usize,
    pub edges_after: usize,
    pub nodes_added: usize,
    pub nodes_removed: usize,
    /// Merge operations; each also counts one removed node.
    pub nodes_merged: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    /// Stage-specific count, such as derived spans for expansion.
    #[serde(default)]
    pub items: usize,
}

impl StageAudit {
    pub fn skipped(stage: &str, dag: &ConceptDag) -> StageAudit {
        StageAudit {
            stage: stage.into(),
            enabled: false,
            nodes_before: dag.node_count(),
            nodes_after: dag.node_count(),
            edges_before: dag.edge_count(),
            edges_after: dag.edge_count(),
            ..Default::default()
        }
    }

    /// Difference between two snapshots of the same graph.
    pub fn between(stage: &str, before: &ConceptDag, after: &ConceptDag, merged: usize) -> StageAudit {
        let nb: BTreeSet<NodeId> = before.node_ids().collect();
        let na: BTreeSet<NodeId> = after.node_ids().collect();
        let eb = before.edge_set();
        let ea = after.edge_set();
        StageAudit {
            stage: stage.into(),
            enabled: true,
            nodes_before: nb.len(),
            nodes_after: na.len(),
            edges_before: eb.len(),
            edges_after: ea.len(),
            nodes_added: na.difference(&nb).count(),
            nodes_removed: nb.difference(&na).count(),
            nodes_merged: merged,
            edges_added: ea.difference(&eb).count(),
            edges_removed: eb.difference(&ea).count(),
            items: 0,
        }
    }

    /// `after = before + added - removed` for nodes and edges.
    pub fn is_conserved(&self) -> bool {
        self.nodes_before + self.nodes_added == self.nodes_after + self.nodes_removed
            && self.edges_before + self.edges_added == self.edges_after + self.edges_removed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub stages: Vec<StageAudit>,
    /// Non-root nodes of the final graph by origin.
    pub final_by_origin: BTreeMap<Origin, usize>,
}

pub fn component_report(trace: &[StageAudit], dag: &ConceptDag) -> ComponentReport {
    let mut final_by_origin = BTreeMap::new();
    for node in dag.nodes().filter(|n| n.origin != Origin::Root) {
        *final_by_origin.entry(node.origin).or_insert(0) += 1;
    }
    ComponentReport {
        stages: trace.to_vec(),
        final_by_origin,
    }
}
