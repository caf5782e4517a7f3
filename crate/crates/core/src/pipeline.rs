//! End-to-end build: spans in, pruned graph and navigation out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dag::{add_head_roots, build_dag, head_classes, ConceptDag};
use crate::embedding::{EmbeddingProvider, RemoteProvider, TrigramProvider, VectorsFileProvider};
use crate::error::{Error, Result};
use crate::evalkit::StageAudit;
use crate::expansion::{expand_all, fold_inputs, AnnotatedSpan};
use crate::grouping::group;
use crate::refine::{
    assign_representatives, collapse_single_child, prune_children, select_entry_points, EntryPointConfig,
    NavigationResult,
};
use crate::semantic::{merge_ontology_synonyms, merge_semantic, MergeConfig};
use crate::taxonomy::{add_taxonomic_nodes, link_nodes, Ontology, TaxonomyConfig};
use crate::textnorm::{build_class_index, content_lemmas, load_lexicon, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Trigram,
    VectorsFile { path: PathBuf },
    Remote { url: String },
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderConfig::Trigram => Box::new(TrigramProvider),
            ProviderConfig::VectorsFile { path } => Box::new(VectorsFileProvider::load(path)?),
            ProviderConfig::Remote { url } => Box::new(RemoteProvider::new(url.clone())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub expansion: bool,
    pub semantic_merge: bool,
    pub ontology_merge: bool,
    pub taxonomy: bool,
    pub pruning: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            expansion: true,
            semantic_merge: true,
            ontology_merge: true,
            taxonomy: true,
            pruning: true,
        }
    }
}

impl StageToggles {
    pub fn grouping_only() -> Self {
        StageToggles {
            expansion: false,
            semantic_merge: false,
            ontology_merge: false,
            taxonomy: false,
            pruning: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub t1: f64,
    pub t2: f64,
    pub k: usize,
    pub affinity_floor: f64,
    pub max_ancestor_depth: usize,
    pub min_governed: usize,
    pub provider: ProviderConfig,
    pub stages: StageToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let merge = MergeConfig::default();
        let entry = EntryPointConfig::default();
        let taxonomy = TaxonomyConfig::default();
        PipelineConfig {
            t1: merge.t1,
            t2: merge.t2,
            k: entry.k,
            affinity_floor: entry.affinity_floor,
            max_ancestor_depth: taxonomy.max_ancestor_depth,
            min_governed: taxonomy.min_governed,
            provider: ProviderConfig::Trigram,
            stages: StageToggles::default(),
        }
    }
}

impl PipelineConfig {
    pub fn merge(&self) -> MergeConfig {
        MergeConfig { t1: self.t1, t2: self.t2 }
    }

    pub fn entry(&self) -> EntryPointConfig {
        EntryPointConfig { k: self.k, affinity_floor: self.affinity_floor }
    }

    pub fn taxonomy(&self) -> TaxonomyConfig {
        TaxonomyConfig {
            max_ancestor_depth: self.max_ancestor_depth,
            min_governed: self.min_governed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.merge().validate()?;
        self.entry().validate()?;
        self.taxonomy().validate()
    }
}

/// Lexical resources and the optional ontology subset.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub ontology: Option<Ontology>,
}

impl Resources {
    pub fn load(lexicon_dir: Option<&Path>, ontology: Option<&Path>) -> Result<Self> {
        Ok(Resources {
            lexicon: match lexicon_dir {
                Some(dir) => load_lexicon(dir)?,
                None => Lexicon::default(),
            },
            ontology: ontology.map(Ontology::load).transpose()?,
        })
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.lexicon.digest().as_bytes());
        h.update(b"|");
        if let Some(o) = &self.ontology {
            h.update(o.digest().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identity of a build: input bytes, configuration and resources. A vectors
/// file is hashed by content, not path.
pub fn dataset_id(input: &[u8], config: &PipelineConfig, resources: &Resources) -> Result<String> {
    let mut h = Sha256::new();
    h.update(input);
    h.update(b"\0");
    h.update(serde_json::to_vec(config)?);
    h.update(b"\0");
    h.update(resources.digest().as_bytes());
    if let ProviderConfig::VectorsFile { path } = &config.provider {
        let bytes = std::fs::read(path).map_err(|source| Error::Resource { path: path.clone(), source })?;
        h.update(b"\0");
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize())[..16].to_string())
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dag: ConceptDag,
    pub nav: NavigationResult,
    pub trace: Vec<StageAudit>,
}

fn stage_err(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage { stage, source: Box::new(e) }
}

fn checked(stage: &'static str, dag: &mut ConceptDag) -> Result<()> {
    dag.attach_orphans();
    dag.check_invariants()
        .map_err(|m| stage_err(stage)(Error::Invariant(m)))
}

/// Run a graph-changing stage, repair orphans, check invariants and record
/// the audit row. `f` returns the number of merges it made.
fn graph_stage(
    trace: &mut Vec<StageAudit>,
    dag: &mut ConceptDag,
    stage: &'static str,
    enabled: bool,
    f: impl FnOnce(&mut ConceptDag) -> Result<usize>,
) -> Result<()> {
    if !enabled {
        trace.push(StageAudit::skipped(stage, dag));
        return Ok(());
    }
    let before = dag.clone();
    let merged = f(dag).map_err(stage_err(stage))?;
    checked(stage, dag)?;
    trace.push(StageAudit::between(stage, &before, dag, merged));
    Ok(())
}

pub fn run_pipeline(
    inputs: &[AnnotatedSpan],
    resources: &Resources,
    config: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<PipelineOutput> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::Argument("no input spans".into()));
    }
    let lexicon = &resources.lexicon;
    let mut trace = Vec::new();

    let spans = if config.stages.expansion {
        expand_all(inputs, lexicon).map_err(stage_err("expand"))?
    } else {
        fold_inputs(inputs)
    };
    let empty = ConceptDag::new();
    trace.push(StageAudit {
        items: spans.iter().filter(|s| !s.is_input).count(),
        ..if config.stages.expansion {
            StageAudit::between("expand", &empty, &empty, 0)
        } else {
            StageAudit::skipped("expand", &empty)
        }
    });

    let vocabulary: Vec<String> = spans.iter().flat_map(|s| content_lemmas(&s.text, lexicon)).collect();
    let index = build_class_index(vocabulary, lexicon);
    let sets = group(&spans, lexicon, &index);
    trace.push(StageAudit {
        items: sets.len(),
        ..StageAudit::between("group", &empty, &empty, 0)
    });

    let mut dag = build_dag(&sets);
    trace.push(StageAudit::between("build_dag", &empty, &dag, 0));

    let heads = if config.stages.expansion {
        head_classes(&spans, lexicon, &index).map_err(stage_err("add_head_roots"))?
    } else {
        Default::default()
    };
    graph_stage(&mut trace, &mut dag, "add_head_roots", true, |dag| {
        add_head_roots(dag, &heads);
        Ok(0)
    })?;

    graph_stage(&mut trace, &mut dag, "merge_semantic", config.stages.semantic_merge, |dag| {
        Ok(merge_semantic(dag, provider, &config.merge())?.total())
    })?;

    let ontology = resources.ontology.as_ref();
    graph_stage(
        &mut trace,
        &mut dag,
        "merge_ontology_synonyms",
        config.stages.ontology_merge && ontology.is_some(),
        |dag| Ok(merge_ontology_synonyms(dag, ontology.expect("checked above"))),
    )?;

    graph_stage(
        &mut trace,
        &mut dag,
        "add_taxonomic_nodes",
        config.stages.taxonomy && ontology.is_some(),
        |dag| {
            let ontology = ontology.expect("checked above");
            let links = link_nodes(dag, ontology);
            add_taxonomic_nodes(dag, ontology, &links, provider, &config.taxonomy())?;
            Ok(0)
        },
    )?;

    graph_stage(&mut trace, &mut dag, "prune_children", config.stages.pruning, |dag| {
        prune_children(dag);
        Ok(0)
    })?;
    graph_stage(&mut trace, &mut dag, "collapse_single_child", config.stages.pruning, |dag| {
        collapse_single_child(dag);
        Ok(0)
    })?;

    let nav = select_entry_points(&mut dag, provider, &config.entry()).map_err(stage_err("select_entry_points"))?;
    trace.push(StageAudit {
        items: nav.entry_points.len(),
        ..StageAudit::between("select_entry_points", &dag, &dag, 0)
    });
    assign_representatives(&mut dag);

    Ok(PipelineOutput { dag, nav, trace })
}
