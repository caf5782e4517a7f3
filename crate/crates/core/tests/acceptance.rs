//! One PASS/FAIL line per acceptance criterion. Tolerances are pinned in
//! the constants below.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::*;
use fixedbitset::FixedBitSet;
use hierbuild_core::dag::{build_dag, ConceptDag, Member, NodeId, Origin};
use hierbuild_core::embedding::{EmbeddingProvider, TrigramProvider, Vector};
use hierbuild_core::evalkit::dag_effort;
use hierbuild_core::expansion::AnnotatedSpan;
use hierbuild_core::format::Artifact;
use hierbuild_core::grouping::EquivalenceSet;
use hierbuild_core::pipeline::{run_pipeline, PipelineConfig, PipelineOutput, ProviderConfig, Resources};
use hierbuild_core::refine::{
    collapse_single_child, greedy_set_cover, prune_children, select_entry_points, CoverCandidate,
    EntryPointConfig, NavigationResult, OtherNode,
};
use hierbuild_core::semantic::{merge_semantic, MergeConfig};
use hierbuild_core::textnorm::{LemmaBag, LemmaClassIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIG2_BUDGET: Duration = Duration::from_secs(5);
const DESK_BUDGET: Duration = Duration::from_secs(60);
const DESK_MEMORY_KIB: u64 = 2 * 1024 * 1024;
const DESK_STRINGS: usize = 2500;
const HASSE_RANDOM_FAMILIES: usize = 2000;
const PRUNE_RANDOM_DAGS: usize = 250;
const PRUNE_MAX_NODES: usize = 300;
const COVER_RANDOM_INSTANCES: usize = 20_000;
const ENTRY_RANDOM_CASES: usize = 200;
const THRESHOLD_CORPORA: usize = 50;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn member(text: &str, count: u64, is_input: bool) -> Member {
    Member { text: text.into(), count, is_input }
}

// ---------------------------------------------------------------- fig2

fn fig2_end_to_end() -> Outcome {
    let start = Instant::now();
    let out = run_fig2(&PipelineConfig::default());
    let elapsed = start.elapsed();
    let dag = &out.dag;

    let rib = nodes_with(dag, "rib fracture");
    ensure!(rib.len() == 1, "expected one node with \"rib fracture\", got {rib:?}");
    let rib = rib[0];
    ensure!(origin_of(dag, rib) == Origin::Substring, "rib fracture node is {:?}", origin_of(dag, rib));
    let sources: BTreeSet<NodeId> = ["bilateral rib fractures", "rib fracture from cpr"]
        .iter()
        .map(|t| nodes_with(dag, t)[0])
        .collect();
    ensure!(*dag.children(rib) == sources, "rib fracture children {:?} != {:?}", dag.children(rib), sources);

    let mi = nodes_with(dag, "heart attack");
    ensure!(mi.len() == 1 && mi == nodes_with(dag, "myocardial infarction"), "synonyms not merged");
    let aliases = member_texts(dag, mi[0]);
    let want: BTreeSet<String> = ["heart attack", "myocardial infarction"].map(String::from).into();
    ensure!(aliases == want, "merged alias set {aliases:?}");

    let tax: Vec<_> = dag.nodes().filter(|n| n.origin == Origin::Taxonomic).collect();
    ensure!(tax.len() == 1, "expected one taxonomic node, got {}", tax.len());
    ensure!(
        tax[0].representative.as_deref() == Some("respiratory diseases"),
        "taxonomic label {:?}",
        tax[0].representative
    );
    let resp: BTreeSet<NodeId> = ["pneumonia", "pneumothorax"].iter().map(|t| nodes_with(dag, t)[0]).collect();
    ensure!(*dag.children(tax[0].id) == resp, "respiratory children {:?}", dag.children(tax[0].id));
    ensure!(elapsed < FIG2_BUDGET, "took {elapsed:?}");
    Ok(format!("{:.0?}", elapsed))
}

// ---------------------------------------------------------------- hasse

fn bag_of(mask: u8, index: &LemmaClassIndex) -> LemmaBag {
    (0..6).filter(|b| mask & (1 << b) != 0).map(|b| index.class_of(&format!("c{b}"))).collect()
}

fn oracle_hasse(masks: &[u8]) -> BTreeSet<(usize, usize)> {
    let proper = |a: u8, b: u8| a != b && a & b == a;
    let mut edges = BTreeSet::new();
    for (i, &lo) in masks.iter().enumerate() {
        if lo == 0 {
            continue;
        }
        for (j, &hi) in masks.iter().enumerate() {
            if proper(lo, hi) && !masks.iter().any(|&m| proper(lo, m) && proper(m, hi)) {
                edges.insert((i, j));
            }
        }
    }
    edges
}

fn hasse_matches(masks: &[u8], index: &LemmaClassIndex) -> Result<(), String> {
    let sets: Vec<EquivalenceSet> = masks
        .iter()
        .enumerate()
        .map(|(i, &m)| EquivalenceSet::new(vec![AnnotatedSpan::input(format!("s{i}"), 1)], bag_of(m, index)))
        .collect();
    let dag = build_dag(&sets);
    let position: BTreeMap<NodeId, usize> = dag
        .nodes()
        .map(|n| (n.id, n.members[0].text[1..].parse::<usize>().unwrap()))
        .collect();
    let got: BTreeSet<(usize, usize)> = dag.edges().map(|(p, c)| (position[&p], position[&c])).collect();
    let want = oracle_hasse(masks);
    if got != want {
        return Err(format!("family {masks:?}: got {got:?}, want {want:?}"));
    }
    Ok(())
}

fn hasse_oracle() -> Outcome {
    let index = LemmaClassIndex::default();
    // Every family of distinct bags over four classes.
    let mut exhaustive = 0;
    for family in 0u32..(1 << 16) {
        let masks: Vec<u8> = (0..16u8).filter(|b| family & (1 << b) != 0).collect();
        if masks.len() > 12 {
            continue;
        }
        hasse_matches(&masks, &index)?;
        exhaustive += 1;
    }
    let mut r = rng(11);
    for _ in 0..HASSE_RANDOM_FAMILIES {
        let n = r.gen_range(1..=12);
        let mut all: Vec<u8> = (0..64).collect();
        all.shuffle(&mut r);
        hasse_matches(&all[..n], &index)?;
    }
    Ok(format!("{exhaustive} exhaustive families over 4 classes, {HASSE_RANDOM_FAMILIES} random over 6"))
}

// ---------------------------------------------------------------- pruning

fn random_dag(r: &mut impl Rng, n: usize) -> ConceptDag {
    let mut dag = ConceptDag::new();
    let root = dag.add_node(Vec::new(), LemmaBag::new(), Origin::Root);
    dag.set_root(root);
    let p_input = r.gen_range(0.2..0.7);
    let ids: Vec<NodeId> = (0..n)
        .map(|i| {
            let input = r.gen_bool(p_input);
            let origin = if input { Origin::Input } else { Origin::Substring };
            dag.add_node(vec![member(&format!("n{i}"), r.gen_range(1..5), input)], LemmaBag::new(), origin)
        })
        .collect();
    let degree = r.gen_range(1.0..4.0);
    for j in 1..n {
        for i in 0..j {
            if r.gen_bool((degree / j as f64).min(1.0)) {
                dag.add_edge(ids[i], ids[j]).unwrap();
            }
        }
    }
    dag.attach_orphans();
    dag
}

fn reach_map(dag: &ConceptDag) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    dag.node_ids().map(|id| (id, dag.reachable_inputs(id).unwrap())).collect()
}

fn pruning_preservation() -> Outcome {
    let mut r = rng(23);
    let mut removed = 0;
    for case in 0..PRUNE_RANDOM_DAGS {
        let n = r.gen_range(2..=PRUNE_MAX_NODES);
        let mut dag = random_dag(&mut r, n);
        let before = reach_map(&dag);
        let strings = input_string_count(&dag);
        let inputs: BTreeSet<NodeId> = dag.input_nodes().into_iter().collect();
        let stats = prune_children(&mut dag);
        removed += stats.edges_removed;
        for (id, reach) in reach_map(&dag) {
            ensure!(reach == before[&id], "case {case}: node {id} reach changed");
        }
        ensure!(dag.input_nodes().into_iter().collect::<BTreeSet<_>>() == inputs, "case {case}: input lost");
        collapse_single_child(&mut dag);
        ensure!(dag.check_invariants().is_ok(), "case {case}: invariants broken");
        for node in dag.nodes() {
            ensure!(
                node.is_input() || Some(node.id) == dag.root() || dag.children(node.id).len() != 1,
                "case {case}: single-child hierarchy node {} survived",
                node.id
            );
        }
        ensure!(input_string_count(&dag) == strings, "case {case}: input strings not conserved");
    }
    // Whole pipeline on random corpora, and on the fixture.
    let mut r = rng(29);
    for case in 0..50 {
        let size = r.gen_range(3..60);
        let corpus = random_corpus(&mut r, size);
        let out = run_pipeline(&corpus, &Resources::default(), &PipelineConfig::default(), &TrigramProvider)
            .map_err(|e| format!("corpus {case}: {e}"))?;
        let want: BTreeSet<String> = corpus.iter().map(|s| s.text.clone()).collect();
        ensure!(input_strings(&out.dag) == want, "corpus {case}: input strings changed");
        ensure!(input_string_count(&out.dag) == want.len(), "corpus {case}: input string count changed");
    }
    let fig = run_fig2(&PipelineConfig::default());
    ensure!(input_string_count(&fig.dag) == fig2_inputs().len(), "fixture input strings changed");
    Ok(format!("{PRUNE_RANDOM_DAGS} random DAGs, {removed} edges pruned, 51 pipelines"))
}

// ---------------------------------------------------------------- set cover

#[derive(Clone)]
struct Child {
    covers: u16,
    total: u64,
    rep: &'static str,
}

/// Reference greedy: most new inputs, then larger total, then smaller
/// representative, then earlier position.
fn oracle_cover(universe: u16, children: &[Child]) -> Vec<usize> {
    let mut left = universe;
    let mut taken = vec![false; children.len()];
    let mut order = Vec::new();
    loop {
        let mut best: Option<(u32, u64, &str, usize)> = None;
        for (i, c) in children.iter().enumerate() {
            let gain = (c.covers & left).count_ones();
            if taken[i] || gain == 0 {
                continue;
            }
            let wins = match best {
                None => true,
                Some((g, t, rep, _)) => gain > g || (gain == g && (c.total > t || (c.total == t && c.rep < rep))),
            };
            if wins {
                best = Some((gain, c.total, c.rep, i));
            }
        }
        match best {
            Some((_, _, _, i)) => {
                taken[i] = true;
                left &= !children[i].covers;
                order.push(i);
            }
            None => return order,
        }
    }
}

fn library_cover(inputs: usize, children: &[Child]) -> Vec<usize> {
    let bits = |m: u16| {
        let mut b = FixedBitSet::with_capacity(inputs);
        (0..inputs).filter(|i| m & (1 << i) != 0).for_each(|i| b.insert(i));
        b
    };
    let universe = bits(children.iter().fold(0, |a, c| a | c.covers));
    let candidates: Vec<CoverCandidate> = children
        .iter()
        .map(|c| CoverCandidate { covers: bits(c.covers), total_count: c.total, representative: c.rep.into() })
        .collect();
    greedy_set_cover(&universe, &candidates)
}

const REPS: [&str; 2] = ["a", "b"];

/// Run the same instance through prune_children and compare kept children.
fn pruned_children_match(inputs: usize, children: &[Child], want: &[usize]) -> Result<(), String> {
    let mut dag = ConceptDag::new();
    let root = dag.add_node(Vec::new(), LemmaBag::new(), Origin::Root);
    dag.set_root(root);
    let leaves: Vec<NodeId> = (0..inputs)
        .map(|i| dag.add_node(vec![member(&format!("x{i}"), 1, true)], LemmaBag::new(), Origin::Input))
        .collect();
    let parent = dag.add_node(vec![member("p", 1, false)], LemmaBag::new(), Origin::Substring);
    dag.add_edge(root, parent).unwrap();
    let kids: Vec<NodeId> = children
        .iter()
        .map(|c| {
            // The representative and count of a derived child are its own
            // member's; leaves carry count 1 and are not members.
            let k = dag.add_node(vec![member(c.rep, c.total, false)], LemmaBag::new(), Origin::Substring);
            dag.add_edge(parent, k).unwrap();
            for (i, &leaf) in leaves.iter().enumerate() {
                if c.covers & (1 << i) != 0 {
                    dag.add_edge(k, leaf).unwrap();
                }
            }
            k
        })
        .collect();
    for &leaf in &leaves {
        if dag.parents(leaf).is_empty() {
            dag.add_edge(root, leaf).unwrap();
        }
    }
    prune_children(&mut dag);
    let kept: BTreeSet<usize> = kids
        .iter()
        .enumerate()
        .filter(|&(_, &k)| dag.contains(k) && dag.has_edge(parent, k))
        .map(|(i, _)| i)
        .collect();
    let want: BTreeSet<usize> = want.iter().copied().collect();
    ensure!(kept == want, "prune kept {kept:?}, oracle {want:?}");
    Ok(())
}

fn set_cover_trace() -> Outcome {
    // Exhaustive: every sequence of up to four nonempty children over four
    // inputs, with tie attributes enumerated per child.
    let mut checked = 0usize;
    let attrs: Vec<(u64, &str)> = [1u64, 2].iter().flat_map(|&t| REPS.iter().map(move |&r| (t, r))).collect();
    let mut stack: Vec<Vec<Child>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if !prefix.is_empty() {
            let got = library_cover(4, &prefix);
            let want = oracle_cover(prefix.iter().fold(0, |a, c| a | c.covers), &prefix);
            ensure!(got == want, "instance {:?}: got {got:?}, want {want:?}", prefix.iter().map(|c| c.covers).collect::<Vec<_>>());
            checked += 1;
        }
        if prefix.len() == 4 {
            continue;
        }
        for covers in 1u16..16 {
            for &(total, rep) in &attrs {
                // Attributes beyond the second child only vary the cover.
                if prefix.len() >= 2 && (total, rep) != (1, "a") {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(Child { covers, total, rep });
                stack.push(next);
            }
        }
    }
    // Random instances at full size: up to six children over up to eight
    // inputs, also checked through prune_children.
    let mut r = rng(37);
    for case in 0..COVER_RANDOM_INSTANCES {
        let inputs = r.gen_range(1..=8);
        let n = r.gen_range(1..=6);
        let children: Vec<Child> = (0..n)
            .map(|_| Child {
                covers: r.gen_range(1u16..(1 << inputs)),
                total: r.gen_range(1..=2),
                rep: REPS[r.gen_range(0..2)],
            })
            .collect();
        let want = oracle_cover(children.iter().fold(0, |a, c| a | c.covers), &children);
        let got = library_cover(inputs, &children);
        ensure!(got == want, "random case {case}: got {got:?}, want {want:?}");
        if case % 10 == 0 && n >= 2 {
            pruned_children_match(inputs, &children, &want).map_err(|e| format!("random case {case}: {e}"))?;
        }
    }
    Ok(format!("{checked} exhaustive instances, {COVER_RANDOM_INSTANCES} random"))
}

// ---------------------------------------------------------------- entry points

struct Const;

impl EmbeddingProvider for Const {
    fn embed(&self, texts: &[String]) -> hierbuild_core::Result<Vec<Vector>> {
        Ok(texts.iter().map(|_| Vector::from_dense(&[1.0, 0.0])).collect())
    }
}

struct Fixture {
    dag: ConceptDag,
    ids: BTreeMap<&'static str, NodeId>,
}

impl Fixture {
    fn new(nodes: &[(&'static str, bool)], edges: &[(&str, &str)]) -> Self {
        let mut dag = ConceptDag::new();
        let root = dag.add_node(Vec::new(), LemmaBag::new(), Origin::Root);
        dag.set_root(root);
        let mut ids = BTreeMap::from([("root", root)]);
        for &(name, input) in nodes {
            let origin = if input { Origin::Input } else { Origin::Substring };
            ids.insert(name, dag.add_node(vec![member(name, 1, input)], LemmaBag::new(), origin));
        }
        for (p, c) in edges {
            dag.add_edge(ids[p], ids[c]).unwrap();
        }
        Fixture { dag, ids }
    }

    fn ids(&self, names: &[&str]) -> Vec<NodeId> {
        names.iter().map(|n| self.ids[n]).collect()
    }
}

fn entry(k: usize) -> EntryPointConfig {
    EntryPointConfig { k, ..Default::default() }
}

fn entry_fixtures() -> Result<(), String> {
    let mut two = Fixture::new(
        &[("P", false), ("Q", false), ("a", true), ("b", true), ("c", true), ("d", true), ("e", true)],
        &[("root", "P"), ("root", "Q"), ("P", "a"), ("P", "b"), ("P", "c"), ("Q", "d"), ("Q", "e")],
    );
    let nav = select_entry_points(&mut two.dag, &Const, &entry(1)).map_err(|e| e.to_string())?;
    ensure!(nav.entry_points == two.ids(&["P"]), "2-subtree k=1 picked {:?}", nav.entry_points);
    ensure!(nav.other_node.children == two.ids(&["d", "e"]), "2-subtree other {:?}", nav.other_node.children);
    let nav = select_entry_points(&mut two.dag, &Const, &entry(2)).map_err(|e| e.to_string())?;
    ensure!(nav.entry_points == two.ids(&["P", "Q"]), "2-subtree k=2 picked {:?}", nav.entry_points);
    ensure!(nav.other_node.children.is_empty(), "2-subtree k=2 other not empty");

    let mut overlap = Fixture::new(
        &[("A", false), ("B", false), ("C", false), ("x", true), ("y", true), ("z", true)],
        &[("root", "A"), ("root", "B"), ("root", "C"), ("A", "x"), ("A", "y"), ("B", "x"), ("B", "y"), ("C", "z")],
    );
    let nav = select_entry_points(&mut overlap.dag, &Const, &entry(2)).map_err(|e| e.to_string())?;
    ensure!(nav.entry_points == overlap.ids(&["A", "C"]), "overlap picked {:?}", nav.entry_points);
    Ok(())
}

fn entry_point_properties() -> Outcome {
    entry_fixtures()?;
    let mut r = rng(41);
    for case in 0..ENTRY_RANDOM_CASES {
        let n = r.gen_range(1..80);
        let mut dag = random_dag(&mut r, n);
        let all: BTreeSet<NodeId> = dag.input_nodes().into_iter().collect();
        let full = select_entry_points(&mut dag, &TrigramProvider, &entry(10)).map_err(|e| e.to_string())?;
        for k in 1..=10 {
            let nav = select_entry_points(&mut dag, &TrigramProvider, &entry(k)).map_err(|e| e.to_string())?;
            let mut seen: BTreeSet<NodeId> = nav.other_node.children.iter().copied().collect();
            for &e in &nav.entry_points {
                ensure!(Some(e) != dag.root(), "case {case}: root picked");
                seen.extend(dag.reachable_inputs(e).unwrap());
            }
            ensure!(seen == all, "case {case} k={k}: coverage broken");
            let distinct: BTreeSet<_> = nav.entry_points.iter().collect();
            ensure!(distinct.len() == nav.entry_points.len(), "case {case} k={k}: duplicate entry");
            let m = nav.entry_points.len();
            ensure!(full.entry_points[..m.min(full.entry_points.len())] == nav.entry_points[..m.min(full.entry_points.len())],
                "case {case}: k={k} is not a prefix of k=10");
        }
    }
    Ok(format!("2 fixtures, {ENTRY_RANDOM_CASES} random DAGs x k=1..10"))
}

// ---------------------------------------------------------------- thresholds

fn merged(out: &PipelineOutput) -> usize {
    out.trace
        .iter()
        .find(|s| s.stage == "merge_semantic")
        .map_or(0, |s| s.nodes_merged)
}

fn identical_siblings_merge(r: &mut impl Rng) -> Result<usize, String> {
    let mut cases = 0;
    for case in 0..100 {
        let corpus = random_corpus(r, 2);
        let text = corpus[0].text.clone();
        let t1 = [0.5, 0.8, 0.9, 0.99, 1.0][case % 5];
        let mut dag = ConceptDag::new();
        let root = dag.add_node(Vec::new(), LemmaBag::new(), Origin::Root);
        dag.set_root(root);
        let a = dag.add_node(vec![member(&text, 2, true)], LemmaBag::new(), Origin::Input);
        let b = dag.add_node(vec![member(&text.to_uppercase(), 1, true)], LemmaBag::new(), Origin::Input);
        let c = dag.add_node(vec![member(&corpus[1].text, 1, true)], LemmaBag::new(), Origin::Input);
        for id in [a, b, c] {
            dag.add_edge(root, id).unwrap();
        }
        merge_semantic(&mut dag, &TrigramProvider, &MergeConfig { t1, t2: 1.0 }).map_err(|e| e.to_string())?;
        ensure!(!dag.contains(a) || !dag.contains(b), "case {case}: {text:?} siblings not merged at t1={t1}");
        ensure!(dag.is_acyclic(), "case {case}: cycle after merge");
        cases += 1;
    }
    Ok(cases)
}

fn threshold_semantics() -> Outcome {
    let mut r = rng(53);
    let strict = PipelineConfig::default();
    let loose = PipelineConfig { t1: 0.8, t2: 0.9, ..Default::default() };
    let (mut strict_total, mut loose_total) = (0, 0);
    for case in 0..THRESHOLD_CORPORA {
        let size = r.gen_range(5..80);
        let corpus = random_corpus(&mut r, size);
        let run = |c: &PipelineConfig| {
            run_pipeline(&corpus, &Resources::default(), c, &TrigramProvider).map_err(|e| format!("corpus {case}: {e}"))
        };
        let (s, l) = (run(&strict)?, run(&loose)?);
        for out in [&s, &l] {
            ensure!(out.dag.is_acyclic(), "corpus {case}: final graph has a cycle");
            ensure!(out.trace.iter().all(|a| a.is_conserved()), "corpus {case}: trace not conserved");
        }
        ensure!(merged(&s) <= merged(&l), "corpus {case}: {} strict merges > {} loose", merged(&s), merged(&l));
        strict_total += merged(&s);
        loose_total += merged(&l);
    }
    let identical = identical_siblings_merge(&mut r)?;
    Ok(format!("merges {strict_total} at (0.9,0.95) vs {loose_total} at (0.8,0.9); {identical} identical-sibling cases"))
}

// ---------------------------------------------------------------- effort

fn chain_nav(entries: usize, children: &[(usize, usize)], other: usize) -> NavigationResult {
    // Entry i has id i; children of entry i get ids from 1000 on.
    let entry_points: Vec<NodeId> = (1..=entries as u32).map(NodeId).collect();
    let mut display_order = BTreeMap::new();
    let mut next = 1000;
    for &(e, n) in children {
        let kids: Vec<NodeId> = (0..n).map(|j| NodeId(next + j as u32)).collect();
        next += n as u32;
        display_order.insert(NodeId(e as u32), kids);
    }
    let other_node = OtherNode {
        id: NodeId(9999),
        children: (0..other).map(|j| NodeId(5000 + j as u32)).collect(),
    };
    NavigationResult { entry_points, other_node, display_order }
}

fn effort_formula() -> Outcome {
    for k in 1..=50 {
        let nav = chain_nav(k, &[], 0);
        for i in 1..=k {
            let e = dag_effort(&nav, &BTreeSet::from([NodeId(i as u32)])).ok_or("entry unreachable")?;
            ensure!(e.effort == i, "k={k}: entry {i} costs {}", e.effort);
        }
    }
    // Second child of the third entry: 3 reads, 1 click, 2 reads.
    let nav = chain_nav(5, &[(3, 4)], 0);
    let target = nav.display_order[&NodeId(3)][1];
    let e = dag_effort(&nav, &BTreeSet::from([target])).ok_or("worked target unreachable")?;
    ensure!(e.effort == 6, "worked fixture costs {}", e.effort);
    ensure!(e.path == [NodeId(3), target], "worked path {:?}", e.path);

    for k in 1..=50 {
        let nav = chain_nav(k, &[], 3);
        for &c in &nav.other_node.children {
            let e = dag_effort(&nav, &BTreeSet::from([c])).ok_or("other child unreachable")?;
            ensure!(e.effort >= k + 2, "k={k}: other child costs {}", e.effort);
        }
    }
    // Same bound on selections made by the library.
    let mut r = rng(59);
    let mut checked = 0;
    for _ in 0..100 {
        let n = r.gen_range(5..60);
        let mut dag = random_dag(&mut r, n);
        let k = r.gen_range(1..4);
        let nav = select_entry_points(&mut dag, &TrigramProvider, &entry(k)).map_err(|e| e.to_string())?;
        if nav.other_node.children.is_empty() {
            continue;
        }
        ensure!(nav.entry_points.len() == k, "other node used with {} < k entries", nav.entry_points.len());
        for &c in &nav.other_node.children {
            let e = dag_effort(&nav, &BTreeSet::from([c])).ok_or("other child unreachable")?;
            ensure!(e.effort >= k + 2, "selected k={k}: other child costs {}", e.effort);
            ensure!(e.path[0] == nav.other_node.id, "path does not start at other");
            checked += 1;
        }
    }
    Ok(format!("{checked} other-node targets on selected DAGs"))
}

// ---------------------------------------------------------------- determinism

fn determinism_round_trip() -> Outcome {
    let config = PipelineConfig::default();
    let a = Artifact::new(config.clone(), run_fig2(&config)).to_json();
    let b = Artifact::new(config.clone(), run_fig2(&config)).to_json();
    ensure!(a == b, "fixture builds differ");
    let back = Artifact::from_json(&a, "fig2").map_err(|e| e.to_string())?.to_json();
    ensure!(back == a, "fixture round trip differs");

    let mut r = rng(61);
    let mut artifacts = 1;
    for case in 0..30 {
        let size = r.gen_range(3..50);
        let corpus = random_corpus(&mut r, size);
        let build = || {
            run_pipeline(&corpus, &Resources::default(), &config, &TrigramProvider)
                .map(|o| Artifact::new(config.clone(), o).to_json())
                .map_err(|e| format!("corpus {case}: {e}"))
        };
        let (x, y) = (build()?, build()?);
        ensure!(x == y, "corpus {case}: builds differ");
        let back = Artifact::from_json(&x, "c").map_err(|e| format!("corpus {case}: {e}"))?.to_json();
        ensure!(back == x, "corpus {case}: round trip differs");
        artifacts += 1;
    }
    for case in 0..50 {
        let n = r.gen_range(1..100);
        let mut dag = random_dag(&mut r, n);
        let nav = select_entry_points(&mut dag, &TrigramProvider, &entry(3)).map_err(|e| e.to_string())?;
        let art = Artifact { config: config.clone(), dag, nav, trace: Vec::new() };
        let json = art.to_json();
        let back = Artifact::from_json(&json, "r").map_err(|e| format!("dag {case}: {e}"))?.to_json();
        ensure!(back == json, "dag {case}: round trip differs");
        artifacts += 1;
    }
    Ok(format!("{artifacts} artifacts"))
}

// ---------------------------------------------------------------- desk scale

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Random lowercase words, pairwise more than one edit apart so that no two
/// share a lemma class.
fn distinct_words(r: &mut impl Rng, n: usize) -> Vec<String> {
    let mut words: Vec<String> = Vec::with_capacity(n);
    while words.len() < n {
        let len = r.gen_range(5..=9);
        let w: String = (0..len).map(|_| r.gen_range(b'a'..=b'z') as char).collect();
        if words.iter().all(|o| strsim::levenshtein(o, &w) > 1) {
            words.push(w);
        }
    }
    words
}

fn desk_corpus(r: &mut impl Rng) -> Vec<String> {
    let heads = distinct_words(r, 60);
    let mods = distinct_words(r, 120);
    let mut seen = BTreeSet::new();
    while seen.len() < DESK_STRINGS {
        let n = r.gen_range(0..=3);
        let mut words: Vec<&str> = mods.choose_multiple(r, n).map(String::as_str).collect();
        words.push(heads.choose(r).unwrap());
        seen.insert(words.join(" "));
    }
    seen.into_iter().collect()
}

fn desk_scale() -> Outcome {
    let mut r = rng(67);
    let texts = desk_corpus(&mut r);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let vectors_path = dir.path().join("vectors.tsv");
    let mut words: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut file = String::new();
    for t in &texts {
        let mut sum = vec![0.0; 64];
        for w in t.split(' ') {
            let v = words
                .entry(w.to_string())
                .or_insert_with(|| (0..64).map(|_| r.gen_range(-1.0..1.0)).collect());
            sum.iter_mut().zip(v.iter()).for_each(|(s, x)| *s += x);
        }
        let noisy: Vec<String> = sum.iter().map(|x| format!("{:.5}", x + r.gen_range(-0.05..0.05))).collect();
        file.push_str(&format!("{t}\t{}\n", noisy.join(" ")));
    }
    for (w, v) in &words {
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
        file.push_str(&format!("{w}\t{}\n", vals.join(" ")));
    }
    std::fs::write(&vectors_path, file).map_err(|e| e.to_string())?;
    let corpus: Vec<AnnotatedSpan> = texts
        .iter()
        .map(|t| AnnotatedSpan::input(t, r.gen_range(1..=30)).with_tokens(head_final_tokens(t)))
        .collect();
    let config = PipelineConfig {
        provider: ProviderConfig::VectorsFile { path: vectors_path },
        ..Default::default()
    };

    let start = Instant::now();
    let provider = config.provider.build().map_err(|e| e.to_string())?;
    let out = run_pipeline(&corpus, &Resources::default(), &config, provider.as_ref()).map_err(|e| e.to_string())?;
    let json = Artifact::new(config.clone(), out).to_json();
    let elapsed = start.elapsed();
    let peak = peak_rss_kib().ok_or("cannot read peak memory")?;
    let back = Artifact::from_json(&json, "desk").map_err(|e| e.to_string())?;
    ensure!(input_string_count(&back.dag) == DESK_STRINGS, "desk build lost input strings");
    let derived = back.dag.nodes().filter(|n| n.origin == Origin::Substring).count();
    ensure!(elapsed < DESK_BUDGET, "took {elapsed:?}");
    ensure!(peak < DESK_MEMORY_KIB, "peak memory {peak} KiB");
    Ok(format!(
        "{DESK_STRINGS} strings, {} nodes ({derived} derived), {:.1?}, peak {} MiB",
        back.dag.node_count(),
        elapsed,
        peak / 1024
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fig2 end-to-end structure", fig2_end_to_end),
        ("transitive-reduction oracle", hasse_oracle),
        ("pruning preservation", pruning_preservation),
        ("greedy set-cover trace", set_cover_trace),
        ("entry-point properties", entry_point_properties),
        ("threshold semantics", threshold_semantics),
        ("effort formula", effort_formula),
        ("determinism and round-trip", determinism_round_trip),
        ("desk-scale performance", desk_scale),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({detail}) [{took:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.1?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
