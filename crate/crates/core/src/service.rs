//! HTTP API: node and metric discovery, range queries, runtime collector
//! administration and a SimpleJSON datasource dialect. Every route except
//! the `/ui/` static mount requires a bearer token.

use std::collections::{BTreeMap, BTreeSet};
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::adapters::CollectorSpec;
use crate::config::{ApiConfig, CollectorOverlay, TokenConfig};
use crate::model::{self_metric_catalog, MetricDef, SELF_TOOL};
use crate::pipeline::{CollectorStatus, Pipeline, PipelineError};
use crate::selector::Selector;
use crate::store::{Aggregator, QueryFrame, StoreError};

/// Upper bound on buckets per frame for a single request.
pub const MAX_BUCKETS: i64 = 100_000;
/// A node is stale once silent for this many max collector intervals.
pub const STALE_FACTOR: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Viewer,
    Admin,
}

impl Role {
    pub fn satisfies(self, required: Role) -> bool {
        self >= required
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub role: Role,
}

const fn route(method: &'static str, path: &'static str, role: Role) -> RouteSpec {
    RouteSpec { method, path, role }
}

/// Every authenticated route and the least role it requires.
pub const ROUTES: &[RouteSpec] = &[
    route("GET", "/", Role::Viewer),
    route("POST", "/search", Role::Viewer),
    route("POST", "/query", Role::Viewer),
    route("GET", "/api/v1/whoami", Role::Viewer),
    route("GET", "/api/v1/nodes", Role::Viewer),
    route("GET", "/api/v1/metrics", Role::Viewer),
    route("POST", "/api/v1/query_range", Role::Viewer),
    route("GET", "/api/v1/admin/collectors", Role::Admin),
    route("POST", "/api/v1/admin/collectors", Role::Admin),
    route("DELETE", "/api/v1/admin/collectors/{id}", Role::Admin),
];

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("missing or unknown bearer token")]
    Unauthenticated,
    #[error("admin role required")]
    Forbidden,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::Unauthenticated => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden => StatusCode::FORBIDDEN,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status(), Json(json!({ "error": self.to_string() }))).into_response();
        if matches!(self, ApiError::Unauthenticated) {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidSelector(_) | StoreError::InvalidRange(_) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// Shared handler state. Cheap to clone.
#[derive(Clone)]
pub struct ApiState {
    inner: Arc<ApiInner>,
}

struct ApiInner {
    pipeline: Pipeline,
    tokens: Vec<(String, Role)>,
    overlay_dir: Option<PathBuf>,
    admin: tokio::sync::Mutex<()>,
}

impl ApiState {
    /// `overlay_dir` receives runtime collector changes; `None` keeps them
    /// in memory only.
    pub fn new(pipeline: Pipeline, tokens: &TokenConfig, overlay_dir: Option<PathBuf>) -> Self {
        Self {
            inner: Arc::new(ApiInner {
                pipeline,
                tokens: vec![
                    (tokens.admin.clone(), Role::Admin),
                    (tokens.viewer.clone(), Role::Viewer),
                ],
                overlay_dir,
                admin: tokio::sync::Mutex::new(()),
            }),
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.inner.pipeline
    }

    /// Maps an `Authorization` header value to a role.
    pub fn authenticate(&self, header: Option<&str>) -> Option<Role> {
        let token = header?.strip_prefix("Bearer ")?.trim();
        self.inner
            .tokens
            .iter()
            .find(|(t, _)| constant_time_eq(t.as_bytes(), token.as_bytes()))
            .map(|(_, r)| *r)
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn authenticate(
    State(state): State<ApiState>,
    mut req: Request,
    next: Next,
) -> Result<Response, ApiError> {
    let header = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok());
    let role = state
        .authenticate(header)
        .ok_or(ApiError::Unauthenticated)?;
    req.extensions_mut().insert(role);
    Ok(next.run(req).await)
}

async fn require_admin(req: Request, next: Next) -> Result<Response, ApiError> {
    match req.extensions().get::<Role>() {
        Some(r) if r.satisfies(Role::Admin) => Ok(next.run(req).await),
        Some(_) => Err(ApiError::Forbidden),
        None => Err(ApiError::Unauthenticated),
    }
}

fn cors(api: &ApiConfig) -> CorsLayer {
    let origins: Vec<HeaderValue> = api
        .cors_origins
        .iter()
        .filter_map(|o| o.parse().ok())
        .collect();
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    if origins.is_empty() {
        layer.allow_origin(Any)
    } else {
        layer.allow_origin(AllowOrigin::list(origins))
    }
}

/// The full application: authenticated API, `/ui/` static mount and CORS.
pub fn router(state: ApiState, api: &ApiConfig) -> Router {
    let admin = Router::new()
        .route(
            "/api/v1/admin/collectors",
            get(list_collectors).post(add_collector),
        )
        .route("/api/v1/admin/collectors/{id}", delete(disable_collector))
        .route_layer(middleware::from_fn(require_admin));
    let authed = Router::new()
        .route("/", get(|| async { "netgraf" }))
        .route("/search", post(search))
        .route("/query", post(simple_query))
        .route("/api/v1/whoami", get(whoami))
        .route("/api/v1/nodes", get(nodes))
        .route("/api/v1/metrics", get(metrics))
        .route("/api/v1/query_range", post(query_range))
        .merge(admin)
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .layer(middleware::from_fn_with_state(state.clone(), authenticate))
        .with_state(state);
    let app = match &api.ui_dir {
        Some(dir) => authed.nest_service(
            "/ui",
            ServeDir::new(dir).append_index_html_on_directories(true),
        ),
        None => authed.nest_service(
            "/ui",
            get(|| async {
                (
                    StatusCode::NOT_FOUND,
                    "dashboard bundle not installed (set api.ui_dir)",
                )
            }),
        ),
    };
    app.layer(cors(api))
}

/// Serves `app` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn whoami(axum::Extension(role): axum::Extension<Role>) -> Json<Value> {
    Json(json!({ "role": role }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeDescriptor {
    pub node: String,
    pub tools: Vec<String>,
    /// Newest network sample from the node, if any.
    pub last_seen_ms: Option<i64>,
    pub stale: bool,
}

/// Node descriptors derived from stored series. Self-metrics name a node
/// but do not count as having heard from it.
pub fn node_descriptors(pipeline: &Pipeline) -> Vec<NodeDescriptor> {
    let store = pipeline.store();
    let mut nodes: BTreeMap<String, (BTreeSet<String>, Option<i64>)> = BTreeMap::new();
    for key in store.list_series(&Selector::all()) {
        if key.node().is_empty() {
            continue;
        }
        let entry = nodes.entry(key.node().to_string()).or_default();
        if key.tool() == SELF_TOOL {
            continue;
        }
        entry.0.insert(key.tool().to_string());
        if let Some(ts) = store.last_ts(&key) {
            entry.1 = Some(entry.1.map_or(ts, |t| t.max(ts)));
        }
    }
    let now = pipeline.clock().now_ms();
    let threshold = STALE_FACTOR * pipeline.max_interval_ms();
    nodes
        .into_iter()
        .map(|(node, (tools, last))| NodeDescriptor {
            node,
            tools: tools.into_iter().collect(),
            last_seen_ms: last,
            stale: last.is_none_or(|t| now - t > threshold),
        })
        .collect()
}

async fn nodes(State(state): State<ApiState>) -> Json<Vec<NodeDescriptor>> {
    Json(node_descriptors(state.pipeline()))
}

/// Registered catalog plus self-metrics, sorted by name.
pub fn metric_catalog(pipeline: &Pipeline) -> Vec<MetricDef> {
    let mut cat = pipeline.registry().catalog();
    cat.extend(self_metric_catalog());
    cat.sort_by(|a, b| a.name.cmp(&b.name));
    cat.dedup_by(|a, b| a.name == b.name);
    cat
}

async fn metrics(State(state): State<ApiState>) -> Json<Vec<MetricDef>> {
    Json(metric_catalog(state.pipeline()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub selector: String,
    pub t0: i64,
    pub t1: i64,
    pub step_ms: i64,
    #[serde(default = "default_agg")]
    pub agg: String,
}

fn default_agg() -> String {
    Aggregator::Avg.as_str().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResponse {
    pub frames: Vec<QueryFrame>,
}

fn run_query(
    pipeline: &Pipeline,
    selector: &str,
    t0: i64,
    t1: i64,
    step_ms: i64,
    agg: &str,
) -> Result<Vec<QueryFrame>, ApiError> {
    let selector = Selector::parse(selector).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let agg: Aggregator = agg.parse().map_err(ApiError::BadRequest)?;
    if step_ms > 0 && t1 > t0 && (t1 - t0) / step_ms > MAX_BUCKETS {
        return Err(ApiError::BadRequest(format!(
            "more than {MAX_BUCKETS} buckets requested"
        )));
    }
    Ok(pipeline
        .store()
        .query_range(&selector, t0, t1, step_ms, agg)?)
}

async fn query_range(
    State(state): State<ApiState>,
    body: Bytes,
) -> Result<Json<QueryResponse>, ApiError> {
    let req: QueryRequest = parse_body(&body)?;
    let frames = run_query(
        state.pipeline(),
        &req.selector,
        req.t0,
        req.t1,
        req.step_ms,
        &req.agg,
    )?;
    Ok(Json(QueryResponse { frames }))
}

#[derive(Debug, Deserialize)]
struct SearchRequest {
    #[serde(default)]
    target: String,
}

async fn search(State(state): State<ApiState>, body: Bytes) -> Result<Json<Vec<String>>, ApiError> {
    let req: SearchRequest = parse_body(&body)?;
    let names = state
        .pipeline()
        .store()
        .list_series(&Selector::all())
        .into_iter()
        .map(|k| k.to_string())
        .filter(|k| k.contains(&req.target))
        .collect();
    Ok(Json(names))
}

/// Epoch milliseconds or an RFC 3339 instant.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Instant {
    Millis(i64),
    Text(String),
}

impl Instant {
    fn to_ms(&self) -> Result<i64, ApiError> {
        match self {
            Instant::Millis(ms) => Ok(*ms),
            Instant::Text(s) => chrono::DateTime::parse_from_rfc3339(s)
                .map(|d| d.timestamp_millis())
                .map_err(|e| ApiError::BadRequest(format!("bad instant `{s}`: {e}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SimpleRange {
    from: Instant,
    to: Instant,
}

#[derive(Debug, Deserialize)]
struct SimpleTarget {
    target: String,
    #[serde(default)]
    agg: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SimpleQuery {
    range: SimpleRange,
    #[serde(default)]
    targets: Vec<SimpleTarget>,
    #[serde(default)]
    interval_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleSeries {
    pub target: String,
    pub datapoints: Vec<(Option<f64>, i64)>,
}

/// SimpleJSON payload for the frames of one target.
pub fn to_simple_series(frames: Vec<QueryFrame>) -> Vec<SimpleSeries> {
    frames
        .into_iter()
        .map(|f| SimpleSeries {
            target: f.series.to_string(),
            datapoints: f.points.into_iter().map(|(ts, v)| (v, ts)).collect(),
        })
        .collect()
}

async fn simple_query(
    State(state): State<ApiState>,
    body: Bytes,
) -> Result<Json<Vec<SimpleSeries>>, ApiError> {
    let req: SimpleQuery = parse_body(&body)?;
    let (t0, t1) = (req.range.from.to_ms()?, req.range.to.to_ms()?);
    let step = req
        .interval_ms
        .unwrap_or(crate::store::MIN_STEP_MS)
        .max(crate::store::MIN_STEP_MS);
    let mut out = Vec::new();
    for t in &req.targets {
        let agg = t.agg.clone().unwrap_or_else(default_agg);
        out.extend(to_simple_series(run_query(
            state.pipeline(),
            &t.target,
            t0,
            t1,
            step,
            &agg,
        )?));
    }
    Ok(Json(out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectorView {
    #[serde(flatten)]
    pub spec: CollectorSpec,
    pub status: Option<CollectorStatus>,
}

const REDACTED: &str = "********";

async fn list_collectors(State(state): State<ApiState>) -> Json<Vec<CollectorView>> {
    let p = state.pipeline();
    let views = p
        .collectors()
        .into_iter()
        .map(|mut spec| {
            if let Some(c) = spec.credentials.as_mut() {
                c.secret = REDACTED.into();
            }
            CollectorView {
                status: p.status(&spec.id),
                spec,
            }
        })
        .collect();
    Json(views)
}

fn persist(state: &ApiState, change: impl FnOnce(&mut CollectorOverlay)) -> Result<(), ApiError> {
    let Some(dir) = &state.inner.overlay_dir else {
        return Ok(());
    };
    let mut overlay = CollectorOverlay::load(dir).map_err(|e| ApiError::Internal(e.to_string()))?;
    change(&mut overlay);
    overlay
        .save(dir)
        .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn add_collector(State(state): State<ApiState>, body: Bytes) -> Result<Response, ApiError> {
    let spec: CollectorSpec = parse_body(&body)?;
    let _guard = state.inner.admin.lock().await;
    let p = state.pipeline();
    p.add_collector(spec.clone()).map_err(|e| match e {
        PipelineError::DuplicateCollector(id) => {
            ApiError::Conflict(format!("collector `{id}` already exists"))
        }
        PipelineError::InvalidSpec(e) => ApiError::BadRequest(format!("invalid spec: {e}")),
        other => ApiError::Internal(other.to_string()),
    })?;
    let id = spec.id.clone();
    if let Err(e) = persist(&state, |o| o.add(spec)) {
        let _ = p.remove_collector(&id);
        return Err(e);
    }
    tracing::info!(collector = %id, "collector added");
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn disable_collector(
    State(state): State<ApiState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let _guard = state.inner.admin.lock().await;
    state
        .pipeline()
        .disable_collector(&id)
        .map_err(|_| ApiError::NotFound(format!("no collector `{id}`")))?;
    persist(&state, |o| o.disable(&id))?;
    tracing::info!(collector = %id, "collector disabled");
    Ok(Json(json!({ "id": id, "enabled": false })))
}
