use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use super::synth::Generator;
use super::{EmulatedNode, EmulatorError, FaultKind, TopologyConfig, ZabbixAccount};
use crate::clock::SharedClock;
use crate::model::ToolKind;

/// Body served during GARBAGE windows. Fails every dialect's parser.
pub const GARBAGE_BODY: &str = "#!\n{{{\"unterminated\n";

pub const ZABBIX_ITEMS: &[(&str, &str)] = &[("net.if.in", "23001"), ("icmppingloss", "23002")];

/// Request accounting for one emulated endpoint.
#[derive(Debug, Default)]
pub struct EndpointStats {
    requests: AtomicU64,
    in_flight: AtomicI64,
    max_in_flight: AtomicI64,
    first_request_ms: Mutex<Option<i64>>,
}

impl EndpointStats {
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> i64 {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// Emulated time of the first request, if any arrived.
    pub fn first_request_ms(&self) -> Option<i64> {
        *self.first_request_ms.lock()
    }
}

struct NodeState {
    node: EmulatedNode,
    gen: Generator,
    origin_ms: i64,
    clock: SharedClock,
    slow_delay: Duration,
    history_step_ms: i64,
    zabbix: ZabbixAccount,
}

impl NodeState {
    fn rel(&self, t: i64) -> i64 {
        t - self.origin_ms
    }

    /// Whether the node was collecting at absolute time `t`.
    fn collecting(&self, t: i64) -> bool {
        t >= self.origin_ms && !self.node.is_down(self.rel(t))
    }

    fn throughput(&self, t: i64) -> f64 {
        self.gen.throughput(self.rel(t))
    }

    fn loss(&self, t: i64) -> f64 {
        self.gen.loss(self.rel(t))
    }

    fn retransmits(&self, t: i64) -> u64 {
        self.gen.retransmits(self.rel(t))
    }

    fn history_grid(&self, from_ms: i64, to_ms: i64) -> Vec<i64> {
        let step = self.history_step_ms;
        let first = from_ms.max(self.origin_ms).div_euclid(step) * step;
        let mut out = Vec::new();
        let mut t = if first < from_ms.max(self.origin_ms) {
            first + step
        } else {
            first
        };
        while t <= to_ms {
            if self.collecting(t) {
                out.push(t);
            }
            t += step;
        }
        out
    }

    fn zabbix_token(&self, epoch: i64) -> String {
        let mut h = Sha256::new();
        let z = &self.zabbix;
        h.update(format!(
            "{}:{}:{}:{}",
            z.username, z.password, self.node.node_id, epoch
        ));
        h.finalize()
            .iter()
            .take(16)
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    fn zabbix_epoch(&self, now: i64) -> i64 {
        match self.zabbix.token_ttl_ms {
            Some(ttl) if ttl > 0 => self.rel(now).div_euclid(ttl),
            _ => 0,
        }
    }
}

#[derive(Clone)]
struct Endpoint {
    state: Arc<NodeState>,
    stats: Arc<EndpointStats>,
}

/// Handle to a running topology. Dropping it stops every endpoint.
pub struct RunningTopology {
    config: TopologyConfig,
    origin_ms: i64,
    addrs: BTreeMap<(String, ToolKind), SocketAddr>,
    stats: BTreeMap<(String, ToolKind), Arc<EndpointStats>>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningTopology {
    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn origin_ms(&self) -> i64 {
        self.origin_ms
    }

    pub fn addrs(&self) -> &BTreeMap<(String, ToolKind), SocketAddr> {
        &self.addrs
    }

    pub fn addr(&self, node: &str, tool: ToolKind) -> Option<SocketAddr> {
        self.addrs.get(&(node.to_string(), tool)).copied()
    }

    pub fn stats(&self, node: &str, tool: ToolKind) -> Option<Arc<EndpointStats>> {
        self.stats.get(&(node.to_string(), tool)).cloned()
    }

    pub fn collector_specs(
        &self,
        interval_ms: i64,
        timeout_ms: i64,
    ) -> Vec<crate::adapters::CollectorSpec> {
        self.config
            .collector_specs(&self.addrs, interval_ms, timeout_ms)
    }

    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

impl Drop for RunningTopology {
    fn drop(&mut self) {
        let _ = self.shutdown.send(true);
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, EmulatorError> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            EmulatorError::PortInUse(addr)
        } else {
            EmulatorError::Bind { addr, source: e }
        }
    })
}

/// Binds every (node, tool) endpoint and serves it until the returned
/// handle is shut down or dropped.
pub async fn serve_topology(
    config: TopologyConfig,
    clock: SharedClock,
) -> Result<RunningTopology, EmulatorError> {
    config.validate()?;
    let origin_ms = config.origin_ms.unwrap_or_else(|| clock.now_ms());
    let (shutdown, shutdown_rx) = watch::channel(false);
    let mut addrs = BTreeMap::new();
    let mut stats = BTreeMap::new();
    let mut tasks = Vec::new();
    for node in &config.nodes {
        let state = Arc::new(NodeState {
            node: node.clone(),
            gen: Generator::new(node.profile.clone()),
            origin_ms,
            clock: clock.clone(),
            slow_delay: Duration::from_millis(config.slow_delay_ms),
            history_step_ms: config.history_step_ms,
            zabbix: config.zabbix.clone(),
        });
        for (tool, port) in &node.tools {
            let want: SocketAddr = format!("{}:{}", node.host, port).parse().map_err(|_| {
                EmulatorError::InvalidTopology(format!("bad address for {}", node.node_id))
            })?;
            let listener = bind(want).await?;
            let addr = listener.local_addr().map_err(|e| EmulatorError::Bind {
                addr: want,
                source: e,
            })?;
            let ep = Endpoint {
                state: state.clone(),
                stats: Arc::new(EndpointStats::default()),
            };
            addrs.insert((node.node_id.clone(), *tool), addr);
            stats.insert((node.node_id.clone(), *tool), ep.stats.clone());
            let router = router(*tool, ep.clone());
            tasks.push(tokio::spawn(supervise(
                addr,
                listener,
                router,
                state.clone(),
                shutdown_rx.clone(),
            )));
        }
    }
    Ok(RunningTopology {
        config,
        origin_ms,
        addrs,
        stats,
        shutdown,
        tasks,
    })
}

/// Sleeps until emulated time reaches `target`. Returns false on shutdown.
async fn wait_until(state: &NodeState, target: i64, shutdown: &mut watch::Receiver<bool>) -> bool {
    loop {
        if *shutdown.borrow() {
            return false;
        }
        let now = state.clock.now_ms();
        if now >= target {
            return true;
        }
        let nap = state
            .clock
            .wall_duration(target - now)
            .clamp(Duration::from_millis(1), Duration::from_millis(20));
        tokio::select! {
            _ = tokio::time::sleep(nap) => {}
            _ = shutdown.changed() => {}
        }
    }
}

/// Serves `router`, closing the listener for the node's DOWN windows.
async fn supervise(
    addr: SocketAddr,
    first: TcpListener,
    router: Router,
    state: Arc<NodeState>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut listener = Some(first);
    let downs: Vec<(i64, i64)> = state
        .node
        .faults
        .iter()
        .filter(|f| f.kind == FaultKind::Down)
        .map(|f| (f.start_ms + state.origin_ms, f.end_ms + state.origin_ms))
        .collect();
    loop {
        if *shutdown.borrow() {
            return;
        }
        let now = state.clock.now_ms();
        if let Some(&(_, end)) = downs.iter().find(|(s, e)| *s <= now && now < *e) {
            drop(listener.take());
            debug!(%addr, "endpoint down");
            if !wait_until(&state, end, &mut shutdown).await {
                return;
            }
            continue;
        }
        let l = match listener.take() {
            Some(l) => l,
            None => match bind(addr).await {
                Ok(l) => l,
                Err(e) => {
                    warn!(%addr, "rebind failed: {e}");
                    tokio::time::sleep(Duration::from_millis(10)).await;
                    continue;
                }
            },
        };
        let next_down = downs.iter().map(|(s, _)| *s).filter(|s| *s > now).min();
        let st = state.clone();
        let mut rx = shutdown.clone();
        let stop = async move {
            match next_down {
                Some(t) => {
                    wait_until(&st, t, &mut rx).await;
                }
                None => {
                    let _ = rx.wait_for(|v| *v).await;
                }
            }
        };
        if let Err(e) = axum::serve(l, router.clone())
            .with_graceful_shutdown(stop)
            .await
        {
            warn!(%addr, "endpoint stopped: {e}");
        }
    }
}

fn router(tool: ToolKind, ep: Endpoint) -> Router {
    let routes = match tool {
        ToolKind::Prometheus => Router::new().route("/metrics", get(prometheus_metrics)),
        ToolKind::Netdata => Router::new()
            .route("/api/v1/chart", get(netdata_chart))
            .route("/api/v1/data", get(netdata_data)),
        ToolKind::Ntopng => {
            Router::new().route("/lua/rest/v2/get/interface/data.lua", get(ntopng_interface))
        }
        ToolKind::Perfsonar => Router::new().route("/archive/{event}", get(perfsonar_archive)),
        ToolKind::Zabbix => Router::new().route("/api_jsonrpc.php", post(zabbix_rpc)),
    };
    routes
        .layer(middleware::from_fn_with_state(ep.clone(), faults))
        .with_state(ep)
}

async fn faults(State(ep): State<Endpoint>, req: Request, next: Next) -> Response {
    let s = &ep.state;
    let now = s.clock.now_ms();
    ep.stats.requests.fetch_add(1, Ordering::SeqCst);
    ep.stats.first_request_ms.lock().get_or_insert(now);
    let n = ep.stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    ep.stats.max_in_flight.fetch_max(n, Ordering::SeqCst);
    let resp = match s.node.fault_at(s.rel(now)) {
        Some(FaultKind::Garbage) => (StatusCode::OK, GARBAGE_BODY).into_response(),
        Some(FaultKind::Slow) => {
            tokio::time::sleep(s.slow_delay).await;
            next.run(req).await
        }
        _ => next.run(req).await,
    };
    ep.stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    resp
}

type Params = Query<HashMap<String, String>>;

fn param_i64(q: &HashMap<String, String>, name: &str) -> Option<i64> {
    q.get(name).and_then(|v| v.parse().ok())
}

async fn prometheus_metrics(State(ep): State<Endpoint>) -> Response {
    let s = &ep.state;
    let now = s.clock.now_ms();
    let rel = s.rel(now).max(0) as f64 / 1000.0;
    let retrans = s.retransmits(now);
    let size = 1.0e11;
    let avail = size * 0.6 - rel * 1.0e4;
    let read = (rel * 2.0e5).floor();
    let written = (rel * 8.0e5).floor();
    let body = format!(
        "# HELP node_netstat_Tcp_RetransSegs Statistic TcpRetransSegs.\n\
         # TYPE node_netstat_Tcp_RetransSegs untyped\n\
         node_netstat_Tcp_RetransSegs {retrans}\n\
         # HELP node_filesystem_avail_bytes Filesystem space available to non-root users in bytes.\n\
         # TYPE node_filesystem_avail_bytes gauge\n\
         node_filesystem_avail_bytes{{device=\"/dev/sda1\",fstype=\"ext4\",mountpoint=\"/\"}} {avail:e}\n\
         # HELP node_filesystem_size_bytes Filesystem size in bytes.\n\
         # TYPE node_filesystem_size_bytes gauge\n\
         node_filesystem_size_bytes{{device=\"/dev/sda1\",fstype=\"ext4\",mountpoint=\"/\"}} {size:e}\n\
         # HELP node_disk_read_bytes_total The total number of bytes read successfully.\n\
         # TYPE node_disk_read_bytes_total counter\n\
         node_disk_read_bytes_total{{device=\"sda\"}} {read}\n\
         # HELP node_disk_written_bytes_total The total number of bytes written successfully.\n\
         # TYPE node_disk_written_bytes_total counter\n\
         node_disk_written_bytes_total{{device=\"sda\"}} {written}\n"
    );
    ([(header::CONTENT_TYPE, "text/plain; version=0.0.4")], body).into_response()
}

const NETDATA_CHART: &str = "net.eth0";

async fn netdata_chart(Query(q): Params) -> Response {
    match q.get("chart").map(String::as_str) {
        Some(NETDATA_CHART) => Json(json!({
            "id": NETDATA_CHART,
            "name": NETDATA_CHART,
            "type": "net",
            "family": "eth0",
            "title": "Bandwidth (net.eth0)",
            "units": "kilobits/s",
            "update_every": 1,
            "dimensions": {"received": {"name": "received"}, "sent": {"name": "sent"}},
        }))
        .into_response(),
        other => (
            StatusCode::NOT_FOUND,
            format!("Chart is not found: {}", other.unwrap_or("")),
        )
            .into_response(),
    }
}

async fn netdata_data(State(ep): State<Endpoint>, Query(q): Params) -> Response {
    if q.get("chart").map(String::as_str) != Some(NETDATA_CHART) {
        return (StatusCode::NOT_FOUND, "Chart is not found").into_response();
    }
    let s = &ep.state;
    let now_s = s.clock.now_ms().div_euclid(1000);
    let before = param_i64(&q, "before")
        .filter(|b| *b > 0)
        .unwrap_or(now_s)
        .min(now_s);
    let after = param_i64(&q, "after").unwrap_or(-600);
    let first = if after <= 0 { now_s + after + 1 } else { after };
    let mut rows = Vec::new();
    let mut t = before;
    while t >= first && rows.len() < 3600 {
        let ms = t * 1000;
        if s.collecting(ms) {
            let kbps = s.throughput(ms) * 8.0 / 1000.0;
            rows.push(json!([t, kbps, -kbps * 0.4]));
        }
        t -= 1;
    }
    Json(json!({"labels": ["time", "received", "sent"], "data": rows})).into_response()
}

async fn ntopng_interface(State(ep): State<Endpoint>, Query(q): Params) -> Response {
    if q.get("ifid").map(String::as_str) != Some("0") {
        return Json(json!({"rc": -7, "rc_str": "INVALID_INTERFACE", "rc_str_hr": "Invalid interface", "rsp": ""}))
            .into_response();
    }
    let s = &ep.state;
    let now = s.clock.now_ms();
    let packets =
        (s.node.profile.throughput_base * s.rel(now).max(0) as f64 / 1000.0 / 1500.0).floor();
    Json(json!({
        "rc": 0,
        "rc_str": "OK",
        "rc_str_hr": "Success",
        "rsp": {
            "ifid": 0,
            "throughput_bps": s.throughput(now) * 8.0,
            "packets": packets,
            "drops": s.retransmits(now),
        },
    }))
    .into_response()
}

async fn perfsonar_archive(
    State(ep): State<Endpoint>,
    Path(event): Path<String>,
    Query(q): Params,
) -> Response {
    let s = &ep.state;
    let value: fn(&NodeState, i64) -> f64 = match event.as_str() {
        "throughput" => |s, t| s.throughput(t) * 8.0,
        "packet-loss-rate" => |s, t| s.loss(t),
        _ => return (StatusCode::NOT_FOUND, "unknown event type").into_response(),
    };
    let now = s.clock.now_ms();
    let (Some(start), Some(end)) = (param_i64(&q, "time-start"), param_i64(&q, "time-end")) else {
        return (
            StatusCode::BAD_REQUEST,
            "time-start and time-end are required",
        )
            .into_response();
    };
    let rows: Vec<Value> = s
        .history_grid(start * 1000, (end * 1000).min(now))
        .into_iter()
        .map(|t| json!({"ts": t / 1000, "val": value(s, t)}))
        .collect();
    Json(Value::Array(rows)).into_response()
}

fn rpc_error(id: &Value, code: i64, message: &str, data: &str) -> Response {
    Json(json!({"jsonrpc": "2.0", "error": {"code": code, "message": message, "data": data}, "id": id}))
        .into_response()
}

fn as_i64(v: Option<&Value>) -> Option<i64> {
    let v = v?;
    v.as_i64()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
}

async fn zabbix_rpc(State(ep): State<Endpoint>, body: String) -> Response {
    let s = &ep.state;
    let Ok(req) = serde_json::from_str::<Value>(&body) else {
        return rpc_error(&Value::Null, -32700, "Parse error.", "Invalid JSON.");
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    let params = req.get("params").cloned().unwrap_or(Value::Null);
    let now = s.clock.now_ms();
    match req.get("method").and_then(Value::as_str) {
        Some("apiinfo.version") => {
            Json(json!({"jsonrpc": "2.0", "result": "6.0.0", "id": id})).into_response()
        }
        Some("user.login") => {
            let user = params
                .get("username")
                .or_else(|| params.get("user"))
                .and_then(Value::as_str);
            let pass = params.get("password").and_then(Value::as_str);
            if user == Some(s.zabbix.username.as_str()) && pass == Some(s.zabbix.password.as_str())
            {
                let token = s.zabbix_token(s.zabbix_epoch(now));
                Json(json!({"jsonrpc": "2.0", "result": token, "id": id})).into_response()
            } else {
                rpc_error(
                    &id,
                    -32500,
                    "Application error.",
                    "Incorrect user name or password or account is temporarily blocked.",
                )
            }
        }
        Some("history.get") => {
            let auth = req.get("auth").and_then(Value::as_str);
            if auth != Some(s.zabbix_token(s.zabbix_epoch(now)).as_str()) {
                return rpc_error(
                    &id,
                    -32602,
                    "Invalid params.",
                    "Session terminated, re-login, please.",
                );
            }
            let key = params
                .pointer("/filter/key_")
                .and_then(Value::as_str)
                .unwrap_or("");
            let Some((_, itemid)) = ZABBIX_ITEMS.iter().find(|(k, _)| *k == key) else {
                return Json(json!({"jsonrpc": "2.0", "result": [], "id": id})).into_response();
            };
            let from = as_i64(params.get("time_from")).unwrap_or(0) * 1000;
            let till = as_i64(params.get("time_till")).map_or(now, |t| (t * 1000).min(now));
            let mut rows: Vec<Value> = s
                .history_grid(from, till)
                .into_iter()
                .map(|t| {
                    let value = if key == "net.if.in" {
                        format!("{:.0}", s.throughput(t) * 8.0)
                    } else {
                        format!("{:.4}", s.loss(t) * 100.0)
                    };
                    json!({"itemid": itemid, "clock": (t / 1000).to_string(), "value": value, "ns": "0"})
                })
                .collect();
            if params.get("sortorder").and_then(Value::as_str) == Some("DESC") {
                rows.reverse();
            }
            Json(json!({"jsonrpc": "2.0", "result": rows, "id": id})).into_response()
        }
        _ => rpc_error(&id, -32601, "Method not found.", "Incorrect API method."),
    }
}
