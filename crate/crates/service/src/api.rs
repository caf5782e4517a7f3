//! HTTP routes over the dataset store.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hierbuild_core::dag::{NodeId, Origin};
use hierbuild_core::evalkit::{dag_effort, evaluate, evaluation_index, graph_metrics, DagMetrics, EffortReport};
use hierbuild_core::pipeline::PipelineConfig;
use hierbuild_core::refine::choose_representative;
use hierbuild_core::textnorm::normalize;
use hierbuild_core::ErrorKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{DatasetRecord, Snapshot, Store, StoreError};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;
pub const MAX_SEARCH_RESULTS: usize = 50;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn node_not_found(id: u32) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("node {id} not found"))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::NotReady { .. } => StatusCode::CONFLICT,
            StoreError::Core(core) => match core.kind() {
                ErrorKind::Usage | ErrorKind::Data => StatusCode::BAD_REQUEST,
                ErrorKind::Resource => StatusCode::UNPROCESSABLE_ENTITY,
            },
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub representative: String,
    /// Member texts other than the representative.
    pub aliases: Vec<String>,
    pub origin: Origin,
    pub is_input: bool,
    pub reachable_inputs: usize,
    pub child_count: usize,
    pub parent_count: usize,
    pub multi_parent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberView {
    pub text: String,
    pub count: u64,
    pub is_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDetail {
    #[serde(flatten)]
    pub node: NodeView,
    pub members: Vec<MemberView>,
    pub parents: Vec<NodeId>,
    pub total_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryPoints {
    pub dataset: String,
    pub k: usize,
    pub entries: Vec<NodeView>,
    pub other: NodeView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildrenPage {
    pub node: NodeId,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub children: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub node: NodeView,
    pub effort: Option<usize>,
    /// From a top-level item down to the node; empty if unreachable.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResults {
    pub query: String,
    pub results: Vec<SearchHit>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateRequest {
    pub input: String,
    #[serde(default)]
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EffortRequest {
    pub targets: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct SearchQuery {
    q: Option<String>,
}

fn other_view(snap: &Snapshot) -> NodeView {
    let other = &snap.artifact.nav.other_node;
    NodeView {
        id: other.id,
        representative: "other".into(),
        aliases: Vec::new(),
        origin: Origin::Root,
        is_input: false,
        reachable_inputs: other.children.iter().flat_map(|&c| snap.reach.of(c)).collect::<BTreeSet<_>>().len(),
        child_count: other.children.len(),
        parent_count: 0,
        multi_parent: false,
        concept: None,
    }
}

fn node_view(snap: &Snapshot, id: NodeId) -> Option<NodeView> {
    let a = &snap.artifact;
    if id == a.nav.other_node.id && !a.dag.contains(id) {
        return Some(other_view(snap));
    }
    let node = a.dag.node(id)?;
    let representative = node.representative.clone().unwrap_or_else(|| choose_representative(node));
    let mut aliases: Vec<String> = node
        .members
        .iter()
        .map(|m| m.text.clone())
        .filter(|t| *t != representative)
        .collect();
    aliases.sort();
    aliases.dedup();
    let parent_count = a.dag.parents(id).len();
    Some(NodeView {
        id,
        representative,
        aliases,
        origin: node.origin,
        is_input: node.is_input(),
        reachable_inputs: snap.reach.count(id),
        child_count: a.nav.children_of(id).len(),
        parent_count,
        multi_parent: parent_count > 1,
        concept: node.concept.clone(),
    })
}

fn view_or_404(snap: &Snapshot, id: u32) -> Result<NodeView, ApiError> {
    node_view(snap, NodeId(id)).ok_or_else(|| ApiError::node_not_found(id))
}

async fn list(State(store): State<Arc<Store>>) -> Json<Vec<DatasetRecord>> {
    Json(store.list())
}

async fn create(State(store): State<Arc<Store>>, Json(req): Json<CreateRequest>) -> Result<Response, ApiError> {
    let worker = store.clone();
    let (record, spans) = tokio::task::spawn_blocking(move || worker.create(&req.input, req.config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let Some(spans) = spans else {
        return Ok((StatusCode::OK, Json(record)).into_response());
    };
    let id = record.id.clone();
    tokio::task::spawn_blocking(move || store.run_build(&id, spans));
    Ok((StatusCode::ACCEPTED, Json(record)).into_response())
}

async fn status(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<DatasetRecord> {
    Ok(Json(store.record(&id)?))
}

async fn entry_points(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<EntryPoints> {
    let snap = store.snapshot(&id)?;
    let nav = &snap.artifact.nav;
    Ok(Json(EntryPoints {
        dataset: id,
        k: snap.artifact.config.k,
        entries: nav.entry_points.iter().filter_map(|&e| node_view(&snap, e)).collect(),
        other: other_view(&snap),
    }))
}

async fn node(State(store): State<Arc<Store>>, Path((id, node)): Path<(String, u32)>) -> ApiResult<NodeDetail> {
    let snap = store.snapshot(&id)?;
    let view = view_or_404(&snap, node)?;
    let dag = &snap.artifact.dag;
    let (members, parents, total_count) = match dag.node(view.id) {
        Some(n) => (
            n.members
                .iter()
                .map(|m| MemberView { text: m.text.clone(), count: m.count, is_input: m.is_input })
                .collect(),
            dag.parents(view.id).iter().copied().collect(),
            n.total_count(),
        ),
        None => (Vec::new(), Vec::new(), 0),
    };
    Ok(Json(NodeDetail { node: view, members, parents, total_count }))
}

async fn children(
    State(store): State<Arc<Store>>,
    Path((id, node)): Path<(String, u32)>,
    Query(page): Query<PageQuery>,
) -> ApiResult<ChildrenPage> {
    let snap = store.snapshot(&id)?;
    let parent = view_or_404(&snap, node)?.id;
    let all = snap.artifact.nav.children_of(parent);
    let offset = page.offset.unwrap_or(0);
    let limit = page.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_PAGE}")));
    }
    let children = all
        .iter()
        .skip(offset)
        .take(limit)
        .filter_map(|&c| node_view(&snap, c))
        .collect();
    Ok(Json(ChildrenPage { node: parent, total: all.len(), offset, limit, children }))
}

/// Case-insensitive substring match on the representative and every member
/// text. Hits are ordered by effort, unreachable last, then id.
async fn search(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(query): Query<SearchQuery>,
) -> ApiResult<SearchResults> {
    let snap = store.snapshot(&id)?;
    let q = normalize(query.q.as_deref().unwrap_or(""));
    if q.is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    let a = &snap.artifact;
    let mut hits: Vec<SearchHit> = a
        .dag
        .nodes()
        .filter(|n| n.origin != Origin::Root)
        .filter_map(|n| {
            let view = node_view(&snap, n.id)?;
            let matched = normalize(&view.representative).contains(&q)
                || n.members.iter().any(|m| normalize(&m.text).contains(&q));
            if !matched {
                return None;
            }
            let best = dag_effort(&a.nav, &BTreeSet::from([n.id]));
            Some(SearchHit {
                node: view,
                effort: best.as_ref().map(|b| b.effort),
                path: best.map(|b| b.path).unwrap_or_default(),
            })
        })
        .collect();
    hits.sort_by_key(|h| (h.effort.is_none(), h.effort, h.node.id));
    hits.truncate(MAX_SEARCH_RESULTS);
    Ok(Json(SearchResults { query: q, results: hits }))
}

async fn metrics(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<DagMetrics> {
    let snap = store.snapshot(&id)?;
    Ok(Json(graph_metrics(&snap.artifact.dag, &snap.artifact.nav)))
}

async fn effort(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(req): Json<EffortRequest>,
) -> ApiResult<EffortReport> {
    let snap = store.snapshot(&id)?;
    let lexicon = &store.resources().lexicon;
    let a = &snap.artifact;
    let index = evaluation_index(&a.dag, &req.targets, lexicon);
    Ok(Json(evaluate(&a.dag, &a.nav, &req.targets, lexicon, &index)))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/datasets", get(list).post(create))
        .route("/datasets/{id}", get(status))
        .route("/datasets/{id}/entry-points", get(entry_points))
        .route("/datasets/{id}/nodes/{node}", get(node))
        .route("/datasets/{id}/nodes/{node}/children", get(children))
        .route("/datasets/{id}/search", get(search))
        .route("/datasets/{id}/metrics", get(metrics))
        .route("/datasets/{id}/effort", post(effort))
        .with_state(store)
}
