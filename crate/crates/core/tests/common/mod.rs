#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use hierbuild_core::dag::{ConceptDag, NodeId, Origin};
use hierbuild_core::embedding::TrigramProvider;
use hierbuild_core::expansion::{AnnotatedSpan, TokenAnnotation};
use hierbuild_core::input::parse_input;
use hierbuild_core::pipeline::{run_pipeline, PipelineConfig, PipelineOutput, Resources};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fig2_resources() -> Resources {
    let f = fixtures();
    Resources::load(Some(&f.join("lexicon")), Some(&f.join("ontology.jsonl"))).unwrap()
}

pub fn fig2_inputs() -> Vec<AnnotatedSpan> {
    parse_input(fixtures().join("fig2.jsonl")).unwrap()
}

pub fn run_fig2(config: &PipelineConfig) -> PipelineOutput {
    run_pipeline(&fig2_inputs(), &fig2_resources(), config, &TrigramProvider).unwrap()
}

pub fn member_texts(dag: &ConceptDag, id: NodeId) -> BTreeSet<String> {
    dag.node(id).unwrap().members.iter().map(|m| m.text.clone()).collect()
}

/// Nodes having a member with exactly this text.
pub fn nodes_with(dag: &ConceptDag, text: &str) -> Vec<NodeId> {
    dag.nodes()
        .filter(|n| n.members.iter().any(|m| m.text == text))
        .map(|n| n.id)
        .collect()
}

pub fn input_strings(dag: &ConceptDag) -> BTreeSet<String> {
    dag.nodes()
        .flat_map(|n| n.members.iter().filter(|m| m.is_input).map(|m| m.text.clone()))
        .collect()
}

pub fn input_string_count(dag: &ConceptDag) -> usize {
    dag.nodes().map(|n| n.input_member_count()).sum()
}

pub fn origin_of(dag: &ConceptDag, id: NodeId) -> Origin {
    dag.node(id).unwrap().origin
}

const HEADS: &[&str] = &[
    "pain", "fracture", "infection", "failure", "injury", "reflux", "syndrome", "pneumonia",
    "pneumonitis", "anaemia", "anemea", "haemorrhage", "hemorage", "stenosis", "stenoses",
];
const MODIFIERS: &[&str] = &[
    "chest", "rib", "acute", "chronic", "severe", "left", "right", "bilateral", "viral",
    "bacterial", "lung", "kidney", "liver", "heart", "renal", "hepatic", "mild",
];

/// Parse of a flat noun phrase: the last word heads every other word.
pub fn head_final_tokens(text: &str) -> Vec<TokenAnnotation> {
    let words: Vec<&str> = text.split(' ').collect();
    let last = words.len() as i64 - 1;
    words
        .iter()
        .enumerate()
        .map(|(i, w)| TokenAnnotation {
            form: w.to_string(),
            lemma: None,
            pos: Some(if i as i64 == last { "NN" } else { "JJ" }.into()),
            head: if i as i64 == last { -1 } else { last },
        })
        .collect()
}

/// A corpus of distinct strings built from a small medical
/// vocabulary, with spelling variants that land in different lemma classes.
/// Most spans carry a head-final parse; the rest are raw text.
pub fn random_corpus(rng: &mut impl Rng, size: usize) -> Vec<AnnotatedSpan> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < size {
        let head = HEADS.choose(rng).unwrap();
        let n_mod = rng.gen_range(0..=3);
        let mut mods: Vec<&str> = MODIFIERS.choose_multiple(rng, n_mod).copied().collect();
        mods.shuffle(rng);
        let text = mods.into_iter().chain([*head]).collect::<Vec<_>>().join(" ");
        if seen.insert(text.clone()) {
            let mut span = AnnotatedSpan::input(text.clone(), rng.gen_range(1..=20));
            if rng.gen_bool(0.7) {
                span = span.with_tokens(head_final_tokens(&text));
            }
            out.push(span);
        }
    }
    out
}
