//! Dataset registry backed by a directory of build artifacts.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use hierbuild_core::dag::Reachability;
use hierbuild_core::format::{write_atomic, Artifact};
use hierbuild_core::input::parse_input_str;
use hierbuild_core::pipeline::{dataset_id, run_pipeline, sha256_hex, PipelineConfig, Resources};
use hierbuild_core::{expansion::AnnotatedSpan, Error};
use serde::{Deserialize, Serialize};

pub const RECORD_FILE: &str = "record.json";
pub const DAG_FILE: &str = "dag.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl BuildStatus {
    pub fn is_final(self) -> bool {
        matches!(self, BuildStatus::Done | BuildStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    /// sha256 of the submitted input bytes.
    pub input_digest: String,
    pub input_spans: usize,
    pub config: PipelineConfig,
    pub status: BuildStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Artifact path relative to the store, once built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dag: Option<String>,
}

/// A published, immutable build.
#[derive(Debug)]
pub struct Snapshot {
    pub artifact: Artifact,
    pub reach: Reachability,
}

impl Snapshot {
    pub fn new(artifact: Artifact) -> Self {
        let reach = Reachability::new(&artifact.dag);
        Snapshot { artifact, reach }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("dataset {0} not found")]
    NotFound(String),
    #[error("dataset {id} is {status:?}")]
    NotReady { id: String, status: BuildStatus },
    #[error(transparent)]
    Core(#[from] Error),
}

#[derive(Default)]
struct Inner {
    records: BTreeMap<String, DatasetRecord>,
    snapshots: HashMap<String, Arc<Snapshot>>,
}

pub struct Store {
    dir: PathBuf,
    resources: Arc<Resources>,
    inner: Mutex<Inner>,
}

impl Store {
    /// Open an existing store directory and republish finished builds.
    /// Builds that were still pending or running are marked failed.
    pub fn open(dir: impl AsRef<Path>, resources: Resources) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let entries = fs::read_dir(&dir).map_err(|source| Error::Resource { path: dir.clone(), source })?;
        let mut inner = Inner::default();
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let record_path = path.join(RECORD_FILE);
            if !record_path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&record_path).map_err(Error::from)?;
            let mut record: DatasetRecord = serde_json::from_str(&text).map_err(Error::from)?;
            match record.status {
                BuildStatus::Done => {
                    let artifact = Artifact::load(path.join(DAG_FILE))?;
                    inner.snapshots.insert(record.id.clone(), Arc::new(Snapshot::new(artifact)));
                }
                BuildStatus::Pending | BuildStatus::Running => {
                    record.status = BuildStatus::Failed;
                    record.error = Some("build interrupted by restart".into());
                    persist(&dir, &record)?;
                }
                BuildStatus::Failed => {}
            }
            inner.records.insert(record.id.clone(), record);
        }
        Ok(Store {
            dir,
            resources: Arc::new(resources),
            inner: Mutex::new(inner),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn list(&self) -> Vec<DatasetRecord> {
        self.inner.lock().expect("store lock").records.values().cloned().collect()
    }

    pub fn record(&self, id: &str) -> Result<DatasetRecord, StoreError> {
        self.inner
            .lock()
            .expect("store lock")
            .records
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.into()))
    }

    pub fn snapshot(&self, id: &str) -> Result<Arc<Snapshot>, StoreError> {
        let inner = self.inner.lock().expect("store lock");
        let record = inner.records.get(id).ok_or_else(|| StoreError::NotFound(id.into()))?;
        inner
            .snapshots
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotReady { id: id.into(), status: record.status })
    }

    /// Register a build. Returns the record and the parsed spans when a new
    /// build must run, or the existing record when the same input, config
    /// and resources were already submitted and did not fail.
    pub fn create(
        &self,
        input: &str,
        config: PipelineConfig,
    ) -> Result<(DatasetRecord, Option<Vec<AnnotatedSpan>>), StoreError> {
        config.validate()?;
        let spans = parse_input_str(input, "input")?;
        if spans.is_empty() {
            return Err(Error::Argument("input has no spans".into()).into());
        }
        let id = dataset_id(input.as_bytes(), &config, &self.resources)?;
        let mut inner = self.inner.lock().expect("store lock");
        if let Some(existing) = inner.records.get(&id) {
            if existing.status != BuildStatus::Failed {
                return Ok((existing.clone(), None));
            }
        }
        let record = DatasetRecord {
            id: id.clone(),
            input_digest: sha256_hex(input.as_bytes()),
            input_spans: spans.len(),
            config,
            status: BuildStatus::Pending,
            error: None,
            dag: None,
        };
        fs::create_dir_all(self.dir.join(&id)).map_err(Error::from)?;
        persist(&self.dir, &record)?;
        inner.records.insert(id, record.clone());
        Ok((record, Some(spans)))
    }

    fn set_status(&self, id: &str, status: BuildStatus, error: Option<String>, snapshot: Option<Snapshot>) {
        let mut inner = self.inner.lock().expect("store lock");
        if let Some(snapshot) = snapshot {
            inner.snapshots.insert(id.to_string(), Arc::new(snapshot));
        }
        if let Some(record) = inner.records.get_mut(id) {
            if record.status.is_final() || status < record.status {
                return;
            }
            record.status = status;
            record.error = error;
            if status == BuildStatus::Done {
                record.dag = Some(format!("{id}/{DAG_FILE}"));
            }
            let _ = persist(&self.dir, record);
        }
    }

    /// Run a registered build to completion. The snapshot is published in
    /// the same step that marks the record done.
    pub fn run_build(&self, id: &str, spans: Vec<AnnotatedSpan>) -> BuildStatus {
        let Ok(record) = self.record(id) else { return BuildStatus::Failed };
        self.set_status(id, BuildStatus::Running, None, None);
        let result = (|| -> Result<Artifact, Error> {
            let provider = record.config.provider.build()?;
            let out = run_pipeline(&spans, &self.resources, &record.config, provider.as_ref())?;
            let artifact = Artifact::new(record.config.clone(), out);
            artifact.save(self.dir.join(id).join(DAG_FILE))?;
            Ok(artifact)
        })();
        match result {
            Ok(artifact) => {
                self.set_status(id, BuildStatus::Done, None, Some(Snapshot::new(artifact)));
                BuildStatus::Done
            }
            Err(e) => {
                self.set_status(id, BuildStatus::Failed, Some(e.to_string()), None);
                BuildStatus::Failed
            }
        }
    }
}

fn persist(dir: &Path, record: &DatasetRecord) -> Result<(), Error> {
    let mut json = serde_json::to_string_pretty(record)?;
    json.push('\n');
    write_atomic(&dir.join(&record.id).join(RECORD_FILE), json.as_bytes())
}
