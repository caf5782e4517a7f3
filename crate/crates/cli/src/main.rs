//! `hierbuild`: build, inspect and serve concept DAGs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 provider or
//! resource error.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hierbuild_core::evalkit::{component_report, evaluate, evaluation_index, graph_metrics, parse_targets};
use hierbuild_core::format::{write_atomic, Artifact};
use hierbuild_core::input::parse_input;
use hierbuild_core::pipeline::{dataset_id, run_pipeline, PipelineConfig, ProviderConfig, Resources};
use hierbuild_core::{Error, ErrorKind};
use hierbuild_service::{Store, StoreError};

#[derive(Parser)]
#[command(name = "hierbuild", version, about = "Organize extracted strings into a navigable concept DAG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on an input file and write the DAG artifact.
    Build(BuildArgs),
    /// Serve a dataset store over HTTP.
    Serve(ServeArgs),
    /// Flat and DAG effort for a target list.
    Eval(EvalArgs),
    /// Structural statistics of a DAG artifact.
    Metrics(DagArg),
    /// Per-stage node and edge changes recorded in a DAG artifact.
    Report(DagArg),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Trigram,
}

#[derive(Args)]
struct ResourceArgs {
    /// Lexicon directory (stopwords.txt, modals.txt, quantities.txt, lemmas.tsv, synonyms.tsv).
    #[arg(long)]
    resources: Option<PathBuf>,
    /// Ontology subset, one JSON concept per line.
    #[arg(long)]
    ontology: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Base configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, group = "embedding")]
    provider: Option<ProviderKind>,
    /// Precomputed vectors, one `text<TAB>v1 v2 ...` per line.
    #[arg(long, group = "embedding")]
    vectors: Option<PathBuf>,
    /// Remote embedding endpoint.
    #[arg(long, group = "embedding")]
    embed_url: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    affinity_floor: Option<f64>,
    #[arg(long)]
    no_expansion: bool,
    #[arg(long)]
    no_semantic_merge: bool,
    #[arg(long)]
    no_ontology_merge: bool,
    #[arg(long)]
    no_taxonomy: bool,
    #[arg(long)]
    no_pruning: bool,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Existing directory holding dataset builds.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[command(flatten)]
    resources: ResourceArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dag: PathBuf,
    /// Target strings, one per line.
    #[arg(long)]
    targets: PathBuf,
    /// Lexicon used to match targets; should be the one used for the build.
    #[arg(long)]
    resources: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DagArg {
    #[arg(long)]
    dag: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Resource => 3,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Resource { path: path.to_path_buf(), source })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn build_config(args: &BuildArgs) -> Result<PipelineConfig, Error> {
    let mut config: PipelineConfig = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    if args.provider.is_some() {
        config.provider = ProviderConfig::Trigram;
    }
    if let Some(path) = &args.vectors {
        config.provider = ProviderConfig::VectorsFile { path: path.clone() };
    }
    if let Some(url) = &args.embed_url {
        config.provider = ProviderConfig::Remote { url: url.clone() };
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(t1) = args.t1 {
        config.t1 = t1;
    }
    if let Some(t2) = args.t2 {
        config.t2 = t2;
    }
    if let Some(f) = args.affinity_floor {
        config.affinity_floor = f;
    }
    let stages = &mut config.stages;
    stages.expansion &= !args.no_expansion;
    stages.semantic_merge &= !args.no_semantic_merge;
    stages.ontology_merge &= !args.no_ontology_merge;
    stages.taxonomy &= !args.no_taxonomy;
    stages.pruning &= !args.no_pruning;
    config.validate()?;
    Ok(config)
}

fn build(args: BuildArgs) -> Result<(), Error> {
    let config = build_config(&args)?;
    let resources = Resources::load(args.resources.resources.as_deref(), args.resources.ontology.as_deref())?;
    let input_bytes = fs::read(&args.input).map_err(|source| Error::Resource { path: args.input.clone(), source })?;
    let spans = parse_input(&args.input)?;
    let id = dataset_id(&input_bytes, &config, &resources)?;
    let provider = config.provider.build()?;
    let output = run_pipeline(&spans, &resources, &config, provider.as_ref())?;
    let artifact = Artifact::new(config, output);
    emit(args.out.as_deref(), &artifact.to_json())?;
    eprintln!(
        "dataset {id}: {} nodes, {} edges, {} entry points",
        artifact.dag.node_count(),
        artifact.dag.edge_count(),
        artifact.nav.entry_points.len()
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Error> {
    let resources = Resources::load(args.resources.resources.as_deref(), args.resources.ontology.as_deref())?;
    let store = Store::open(&args.store, resources).map_err(|e| match e {
        StoreError::Core(core) => core,
        other => Error::Argument(other.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("serving {} on http://{}", args.store.display(), args.listen);
    runtime.block_on(hierbuild_service::serve(Arc::new(store), args.listen))?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let artifact = Artifact::load(&args.dag)?;
    let targets = parse_targets(&read(&args.targets)?);
    let resources = Resources::load(args.resources.as_deref(), None)?;
    let index = evaluation_index(&artifact.dag, &targets, &resources.lexicon);
    let report = evaluate(&artifact.dag, &artifact.nav, &targets, &resources.lexicon, &index);
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn metrics(args: DagArg) -> Result<(), Error> {
    let artifact = Artifact::load(&args.dag)?;
    emit(None, &to_json(&graph_metrics(&artifact.dag, &artifact.nav))?)
}

fn report(args: DagArg) -> Result<(), Error> {
    let artifact = Artifact::load(&args.dag)?;
    emit(None, &to_json(&component_report(&artifact.trace, &artifact.dag))?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Serve(a) => serve(a),
        Command::Eval(a) => eval(a),
        Command::Metrics(a) => metrics(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
