//! The DAG artifact file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::{ConceptDag, ConceptNode, Member, NodeId, Origin};
use crate::error::{Error, Result};
use crate::evalkit::StageAudit;
use crate::pipeline::{PipelineConfig, PipelineOutput};
use crate::refine::{NavigationResult, OtherNode};
use crate::textnorm::LemmaBag;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub origin: Origin,
    pub representative: Option<String>,
    pub members: Vec<Member>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagFile {
    pub format_version: u64,
    pub config: PipelineConfig,
    pub root: Option<NodeId>,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub entry_points: Vec<NodeId>,
    pub other_node: OtherNode,
    pub display_order: BTreeMap<NodeId, Vec<NodeId>>,
    #[serde(default)]
    pub trace: Vec<StageAudit>,
}

/// A finished build as stored on disk. Bags and vectors are not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub config: PipelineConfig,
    pub dag: ConceptDag,
    pub nav: NavigationResult,
    pub trace: Vec<StageAudit>,
}

impl Artifact {
    pub fn new(config: PipelineConfig, output: PipelineOutput) -> Self {
        Artifact {
            config,
            dag: output.dag,
            nav: output.nav,
            trace: output.trace,
        }
    }

    pub fn to_file(&self) -> DagFile {
        DagFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            root: self.dag.root(),
            nodes: self
                .dag
                .nodes()
                .map(|n| NodeRecord {
                    id: n.id,
                    origin: n.origin,
                    representative: n.representative.clone(),
                    members: n.members.clone(),
                    concept: n.concept.clone(),
                })
                .collect(),
            edges: self.dag.edges().collect(),
            entry_points: self.nav.entry_points.clone(),
            other_node: self.nav.other_node.clone(),
            display_order: self.nav.display_order.clone(),
            trace: self.trace.clone(),
        }
    }

    pub fn from_file(file: DagFile) -> Result<Self> {
        let mut dag = ConceptDag::new();
        for r in file.nodes {
            if dag.contains(r.id) {
                return Err(Error::Invariant(format!("duplicate node id {}", r.id)));
            }
            dag.insert_node(ConceptNode {
                id: r.id,
                members: r.members,
                bag: LemmaBag::new(),
                origin: r.origin,
                vector: None,
                representative: r.representative,
                concept: r.concept,
            });
        }
        for (p, c) in file.edges {
            if !dag.contains(p) || !dag.contains(c) || p == c {
                return Err(Error::Invariant(format!("bad edge {p} -> {c}")));
            }
            dag.link(p, c);
        }
        if let Some(root) = file.root {
            if !dag.contains(root) {
                return Err(Error::Invariant(format!("unknown root {root}")));
            }
            dag.set_root(root);
        }
        dag.check_invariants().map_err(Error::Invariant)?;
        let known = |id: &NodeId| dag.contains(*id);
        let nav = NavigationResult {
            entry_points: file.entry_points,
            other_node: file.other_node,
            display_order: file.display_order,
        };
        let refs_ok = nav.entry_points.iter().all(known)
            && nav.other_node.children.iter().all(known)
            && nav
                .display_order
                .iter()
                .all(|(p, kids)| known(p) && kids.iter().all(known));
        if !refs_ok {
            return Err(Error::Invariant("navigation refers to unknown nodes".into()));
        }
        Ok(Artifact {
            config: file.config,
            dag,
            nav,
            trace: file.trace,
        })
    }

    /// Pretty JSON with a trailing newline. Equal artifacts give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("artifact serializes");
        s.push('\n');
        s
    }

    /// Parse and validate. The version field is checked before anything
    /// else.
    pub fn from_json(text: &str, name: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse(name, e.line(), e.to_string()))?;
        match value.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::UnsupportedVersion(v.to_string())),
            None => return Err(Error::UnsupportedVersion("missing".into())),
        }
        let file: DagFile = serde_json::from_value(value).map_err(|e| Error::parse(name, 0, e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Resource {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Write through a temporary sibling and rename, so readers never see a
    /// partial file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
