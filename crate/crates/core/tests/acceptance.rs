//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use netgraf_core::adapters::CollectorSpec;
use netgraf_core::clock::{Clock, CompressedClock, SharedClock, SystemClock};
use netgraf_core::config::{ApiConfig, DaemonConfig, StoreSection, TokenConfig};
use netgraf_core::daemon::Daemon;
use netgraf_core::emulator::{
    downtime_oracle, serve_topology, BucketExpectation, Cadence, FaultKind, FaultWindow,
    TopologyConfig,
};
use netgraf_core::model::{
    canonical_metric_catalog, canonical_series_key, self_metric_catalog, SeriesKey, ToolKind,
    THROUGHPUT,
};
use netgraf_core::pipeline::PipelineConfig;
use netgraf_core::selector::Selector;
use netgraf_core::service::{Role, ROUTES};
use netgraf_core::store::{Aggregator, RetentionPolicy, Store, StoreConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

const ADMIN: &str = "acceptance-admin-token-000000000000000000";
const VIEWER: &str = "acceptance-viewer-token-00000000000000000";
const CRASH_CHILD_ENV: &str = "NETGRAF_CRASH_CHILD_DIR";

const HOUR_MS: i64 = 3_600_000;
const DESK_SPAN_MS: i64 = 3 * HOUR_MS;
const DESK_FACTOR: f64 = 64.0;
const DESK_STEP_MS: i64 = 10_000;
const DESK_INTERVAL_MS: i64 = 1_000;
const DESK_JITTER_MS: i64 = 100;

type Verdict = Result<String, String>;

fn main() {
    if let Ok(dir) = std::env::var(CRASH_CHILD_ENV) {
        crash_child(Path::new(&dir));
        return;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let mut verdicts: Vec<(&str, Verdict)> = Vec::new();

    let desk = guard(|| rt.block_on(desk_scale_run()));
    match desk {
        Ok(run) => {
            verdicts.push(("1 desk-scale reproduction", run.reproduction_verdict()));
            verdicts.push(("2 elimination soundness", run.elimination_verdict()));
        }
        Err(e) => {
            verdicts.push(("1 desk-scale reproduction", Err(e.clone())));
            verdicts.push(("2 elimination soundness", Err(format!("no run: {e}"))));
        }
    }
    verdicts.push((
        "3 parser conformance",
        guard(parser_conformance).and_then(|v| v),
    ));
    verdicts.push((
        "4 store/oracle equivalence",
        guard(store_oracle).and_then(|v| v),
    ));
    verdicts.push(("5 durability", guard(durability).and_then(|v| v)));
    verdicts.push((
        "6 role enforcement",
        guard(|| rt.block_on(role_enforcement())).and_then(|v| v),
    ));
    verdicts.push((
        "7 runtime plug-in",
        guard(|| rt.block_on(runtime_plugin())).and_then(|v| v),
    ));

    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (name, v) in &verdicts {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        writeln!(out, "ACCEPTANCE {tag} criterion {name}: {detail}").unwrap();
    }
    writeln!(
        out,
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    )
    .unwrap();
    drop(out);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn guard<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    })
}

fn daemon_config(data_dir: &Path, collectors: Vec<CollectorSpec>) -> DaemonConfig {
    DaemonConfig {
        data_dir: data_dir.to_path_buf(),
        api: ApiConfig {
            port: 1,
            ..ApiConfig::default()
        },
        tokens: TokenConfig {
            admin: ADMIN.into(),
            viewer: VIEWER.into(),
        },
        store: StoreSection::default(),
        pipeline: PipelineConfig {
            interval_ms: DESK_INTERVAL_MS,
            jitter_ms: DESK_JITTER_MS,
            ..PipelineConfig::default()
        },
        retention: RetentionPolicy::default(),
        collectors,
    }
}

/// Binds the API to a free loopback port.
fn with_free_port(mut cfg: DaemonConfig) -> DaemonConfig {
    cfg.api.port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port() as u32;
    cfg
}

// ---- criteria 1 and 2 ---------------------------------------------------

struct DeskRun {
    wall_emulation: Duration,
    wall_total: Duration,
    frames: Vec<(String, usize, usize, usize)>,
    null_violations: usize,
    metric_names: BTreeSet<String>,
}

impl DeskRun {
    fn reproduction_verdict(&self) -> Verdict {
        let coverage: Vec<String> = self
            .frames
            .iter()
            .map(|(s, ok, want, _)| {
                format!("{s}={:.1}%", 100.0 * *ok as f64 / (*want).max(1) as f64)
            })
            .collect();
        let detail = format!(
            "{} frames, emulated 3 h in {:.1} s wall, total {:.1} s, non-NULL coverage outside faults [{}], {} NULL buckets in fault windows, {} data points where none may exist",
            self.frames.len(),
            self.wall_emulation.as_secs_f64(),
            self.wall_total.as_secs_f64(),
            coverage.join(", "),
            self.frames.iter().map(|f| f.3).sum::<usize>(),
            self.null_violations,
        );
        let covered = self
            .frames
            .iter()
            .all(|(_, ok, want, _)| *want > 0 && *ok as f64 >= 0.95 * *want as f64);
        if self.frames.len() == 5
            && covered
            && self.null_violations == 0
            && self.wall_emulation <= Duration::from_secs(180)
            && self.wall_total <= Duration::from_secs(300)
        {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn elimination_verdict(&self) -> Verdict {
        let expected: BTreeSet<String> = canonical_metric_catalog()
            .into_iter()
            .chain(self_metric_catalog())
            .map(|m| m.name)
            .collect();
        let detail = format!("stored metric names {:?}", self.metric_names);
        let leaked = self
            .metric_names
            .iter()
            .any(|n| n.contains("disk") || n.contains("filesystem"));
        if self.metric_names == expected && !leaked {
            Ok(detail)
        } else {
            Err(format!("{detail}; expected {expected:?}"))
        }
    }
}

fn desk_topology() -> TopologyConfig {
    let mut topo = TopologyConfig::reference().ephemeral();
    let fault = |node: usize, start_min: i64, len_min: i64, kind: FaultKind| {
        (
            node,
            FaultWindow {
                start_ms: start_min * 60_000,
                end_ms: (start_min + len_min) * 60_000,
                kind,
            },
        )
    };
    for (node, f) in [
        fault(0, 30, 3, FaultKind::Garbage),
        fault(1, 60, 10, FaultKind::Down),
        fault(3, 120, 5, FaultKind::Slow),
        fault(4, 150, 2, FaultKind::Down),
    ] {
        topo.nodes[node].faults.push(f);
    }
    topo
}

async fn desk_scale_run() -> DeskRun {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(CompressedClock::new(SystemClock.now_ms(), DESK_FACTOR));
    let shared: SharedClock = clock.clone();
    let mut topo = desk_topology();
    let origin = clock.now_ms();
    topo.origin_ms = Some(origin);
    let running = serve_topology(topo, shared.clone()).await.unwrap();
    let specs = running.collector_specs(DESK_INTERVAL_MS, 500);
    assert_eq!(specs.len(), 13);
    let daemon = Daemon::start(
        with_free_port(daemon_config(dir.path(), specs)),
        shared.clone(),
    )
    .await
    .unwrap();

    let end = origin + DESK_SPAN_MS;
    while clock.now_ms() < end + 5_000 {
        tokio::time::sleep(Duration::from_millis(200)).await;
    }
    let wall_emulation = started.elapsed();

    // Query through the HTTP API like a dashboard would.
    let http = reqwest::Client::new();
    let body = json!({
        "selector": format!("{THROUGHPUT}{{tool=netdata}}"),
        "t0": origin,
        "t1": end,
        "step_ms": DESK_STEP_MS,
        "agg": "avg",
    });
    let resp: Value = http
        .post(format!("http://{}/api/v1/query_range", daemon.addr()))
        .bearer_auth(VIEWER)
        .json(&body)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let cadence = Cadence {
        interval_ms: DESK_INTERVAL_MS,
        jitter_ms: DESK_JITTER_MS,
    };
    let mut frames = Vec::new();
    let mut null_violations = 0;
    for f in resp["frames"].as_array().unwrap() {
        let series: SeriesKey = f["series"].as_str().unwrap().parse().unwrap();
        let oracle = downtime_oracle(
            running.config(),
            origin,
            &series,
            origin,
            end,
            DESK_STEP_MS,
            cadence,
        );
        let points = f["points"].as_array().unwrap();
        assert_eq!(points.len(), oracle.len());
        let (mut ok, mut want, mut null) = (0, 0, 0);
        for (p, (b, exp)) in points.iter().zip(&oracle) {
            assert_eq!(p[0].as_i64(), Some(*b));
            let present = !p[1].is_null();
            match exp {
                BucketExpectation::NonNull => {
                    want += 1;
                    ok += present as usize;
                }
                BucketExpectation::Null => {
                    null += 1;
                    null_violations += present as usize;
                }
                BucketExpectation::Either => {}
            }
        }
        frames.push((series.node().to_string(), ok, want, null));
    }
    let metric_names = daemon
        .store()
        .list_series(&Selector::all())
        .iter()
        .map(|k| k.name().to_string())
        .collect();
    daemon.shutdown().await.unwrap();
    running.shutdown().await;
    DeskRun {
        wall_emulation,
        wall_total: started.elapsed(),
        frames,
        null_violations,
        metric_names,
    }
}

// ---- criterion 3 --------------------------------------------------------

fn parser_conformance() -> Verdict {
    use netgraf_core::adapters::parse_prometheus_exposition;
    let corpus = support::exposition_corpus();
    let mut mismatches = Vec::new();
    let (mut accepted, mut samples) = (0, 0);
    for (name, body) in &corpus {
        let ours = parse_prometheus_exposition(body, 42).ok().map(|rs| {
            rs.into_iter()
                .map(|r| {
                    (
                        r.source_metric,
                        r.source_labels,
                        r.value.to_bits(),
                        r.ts.unwrap(),
                    )
                })
                .collect::<Vec<_>>()
        });
        let reference = support::reference_exposition(body, 42);
        if let Some(r) = &reference {
            accepted += 1;
            samples += r.len();
        }
        if ours != reference {
            mismatches.push(name.clone());
        }
    }
    let detail = format!(
        "{} fixtures ({accepted} accepted with {samples} samples, {} rejected), {} mismatches {mismatches:?}",
        corpus.len(),
        corpus.len() - accepted,
        mismatches.len()
    );
    if corpus.len() == 50 && mismatches.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- criterion 4 --------------------------------------------------------

fn oracle_key(i: usize) -> SeriesKey {
    canonical_series_key(
        "acc_metric",
        &[
            ("node".into(), format!("n{i}")),
            ("tool".into(), "t".into()),
        ],
    )
    .unwrap()
}

fn store_oracle() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let (mut cases, mut resets_seen) = (0, 0);
    let mut per_agg: BTreeMap<&str, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    for _ in 0..20 {
        let dir = tempfile::tempdir().unwrap();
        let config = StoreConfig {
            chunk_capacity: rng.gen_range(32..1500),
            ..StoreConfig::default()
        };
        let mut data = Vec::new();
        {
            let store = Store::open(dir.path(), config.clone()).unwrap();
            for i in 0..4 {
                let len = rng.gen_range(1..=10_000);
                let mut t = rng.gen_range(0..100_000i64);
                let mut v: f64 = rng.gen_range(0.0..100.0);
                let counter = i % 2 == 0;
                let mut pts = Vec::with_capacity(len);
                for _ in 0..len {
                    t += if rng.gen_bool(0.01) {
                        rng.gen_range(20_000..200_000)
                    } else {
                        rng.gen_range(1..2500)
                    };
                    v = if counter {
                        if rng.gen_bool(0.005) {
                            resets_seen += 1;
                            rng.gen_range(0.0..5.0)
                        } else {
                            v + rng.gen_range(0.0..40.0)
                        }
                    } else {
                        rng.gen_range(-500.0..500.0)
                    };
                    pts.push((t, v));
                }
                let batch: Vec<_> = pts.iter().map(|&(t, v)| (oracle_key(i), t, v)).collect();
                assert!(store.append_batch(&batch).iter().all(Result::is_ok));
                data.push(pts);
            }
            // Half the stores are queried after a clean reopen.
            if rng.gen_bool(0.5) {
                store.close().unwrap();
            } else {
                drop(store);
            }
        }
        let store = Store::open(dir.path(), config).unwrap();
        for _ in 0..50 {
            let i = rng.gen_range(0..data.len());
            let pts = &data[i];
            let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
            let t0 = rng.gen_range(lo - 30_000..=hi);
            let t1 = t0 + rng.gen_range(1..=(hi - lo + 60_000));
            let step = rng.gen_range(1000..=(t1 - t0).clamp(1000, 900_000));
            let agg = Aggregator::ALL[cases % Aggregator::ALL.len()];
            let sel = Selector::parse(&format!("acc_metric{{node=n{i}}}")).unwrap();
            let got = store.query_range(&sel, t0, t1, step, agg).unwrap();
            let expected = support::naive_query(pts, t0, t1, step, agg.as_str());
            if got.len() != 1 || got[0].points != expected {
                failures.push(format!("n{i} [{t0},{t1}) step {step} {agg}"));
            }
            *per_agg.entry(agg.as_str()).or_default() += 1;
            cases += 1;
        }
    }
    let detail = format!(
        "{cases} cases {per_agg:?}, {resets_seen} counter resets, {} mismatches{}",
        failures.len(),
        failures
            .first()
            .map(|f| format!(", first: {f}"))
            .unwrap_or_default()
    );
    if cases == 1000 && failures.is_empty() && resets_seen > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- criterion 5 --------------------------------------------------------

const CRASH_SERIES: usize = 3;

fn crash_value(series: usize, ts: i64) -> f64 {
    (ts as f64) * 0.5 + series as f64 * 1e9 + ((ts / 1000) % 7) as f64 / 8.0
}

fn crash_store_config() -> StoreConfig {
    StoreConfig {
        chunk_capacity: 40,
        sync_writes: false,
        wal_compact_bytes: 32 * 1024,
    }
}

/// Child side: append forever, printing each acknowledged write.
fn crash_child(dir: &Path) {
    let store = Store::open(dir, crash_store_config()).unwrap();
    let keys: Vec<SeriesKey> = (0..CRASH_SERIES).map(oracle_key).collect();
    let mut next: Vec<i64> = keys
        .iter()
        .map(|k| store.last_ts(k).unwrap_or(0) + 1000)
        .collect();
    let mut out = std::io::stdout().lock();
    let mut i = 0usize;
    loop {
        let s = i % CRASH_SERIES;
        let ts = next[s];
        store.append(&keys[s], ts, crash_value(s, ts)).unwrap();
        writeln!(out, "{s} {ts}").unwrap();
        out.flush().unwrap();
        next[s] += 1000;
        i += 1;
    }
}

fn durability() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let exe = std::env::current_exe().unwrap();
    let mut rng = StdRng::seed_from_u64(0xc0ffee);
    let mut acked: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); CRASH_SERIES];
    let (mut total_acked, mut lost, mut corrupt, mut quarantined) =
        (0usize, 0usize, 0usize, 0usize);
    for _ in 0..20 {
        let mut child = Command::new(&exe)
            .env(CRASH_CHILD_ENV, dir.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let kill_after = rng.gen_range(1..4000);
        let mut seen = 0;
        let mut record = |line: String| {
            let (s, ts) = line.split_once(' ').unwrap();
            acked[s.parse::<usize>().unwrap()].insert(ts.parse().unwrap());
        };
        while seen < kill_after {
            match lines.next() {
                Some(Ok(l)) => record(l),
                _ => break,
            }
            seen += 1;
        }
        child.kill().unwrap();
        // Acknowledgements already in the pipe still count.
        for l in lines.map_while(Result::ok) {
            record(l);
        }
        child.wait().unwrap();

        let store = Store::open(dir.path(), crash_store_config()).unwrap();
        quarantined += store.recovery_report().corrupt.len();
        for (s, want) in acked.iter().enumerate() {
            let pts = store.read_points(&oracle_key(s), i64::MIN, i64::MAX);
            let have: BTreeSet<i64> = pts.iter().map(|p| p.0).collect();
            lost += want.difference(&have).count();
            corrupt += pts.iter().filter(|(t, v)| *v != crash_value(s, *t)).count();
            corrupt += pts.windows(2).filter(|w| w[0].0 >= w[1].0).count();
        }
        store.close().unwrap();
    }
    for a in &acked {
        total_acked += a.len();
    }
    let detail = format!(
        "20 kill -9 runs, {total_acked} acknowledged appends, {lost} lost, {corrupt} corrupt reads, {quarantined} quarantined segments"
    );
    if lost == 0 && corrupt == 0 && quarantined == 0 && total_acked > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- criterion 6 --------------------------------------------------------

fn sweep_body(path: &str) -> Option<Value> {
    match path {
        "/search" => Some(json!({ "target": "" })),
        "/query" => Some(
            json!({ "range": { "from": 0, "to": 60_000 }, "targets": [{ "target": THROUGHPUT }] }),
        ),
        "/api/v1/query_range" => {
            Some(json!({ "selector": THROUGHPUT, "t0": 0, "t1": 60_000, "step_ms": 1000 }))
        }
        "/api/v1/admin/collectors" => Some(json!({
            "id": "sweep", "tool": "netdata", "host": "127.0.0.1", "port": 9, "node_label": "n9"
        })),
        _ => None,
    }
}

async fn role_enforcement() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let daemon = Daemon::start(
        with_free_port(daemon_config(dir.path(), Vec::new())),
        Arc::new(SystemClock),
    )
    .await
    .unwrap();
    let http = reqwest::Client::new();
    let base = format!("http://{}", daemon.addr());
    let mut problems = Vec::new();
    let mut requests = 0;
    let garbage = "x".repeat(40);
    // Admin-route success needs the collector to exist before DELETE.
    let mut ordered: Vec<_> = ROUTES.to_vec();
    ordered.sort_by_key(|r| r.method == "DELETE");
    for r in &ordered {
        let path = r.path.replace("{id}", "sweep");
        let method: reqwest::Method = r.method.parse().unwrap();
        for (who, token) in [
            ("none", None),
            ("garbage", Some(garbage.as_str())),
            ("viewer", Some(VIEWER)),
            ("admin", Some(ADMIN)),
        ] {
            let mut req = http.request(method.clone(), format!("{base}{path}"));
            if let Some(t) = token {
                req = req.bearer_auth(t);
            }
            if let Some(b) = sweep_body(&path) {
                req = req.json(&b);
            }
            let status = req.send().await.unwrap().status().as_u16();
            requests += 1;
            let ok = match (who, r.role) {
                ("none" | "garbage", _) => status == 401,
                ("viewer", Role::Admin) => status == 403,
                _ => (200..300).contains(&status),
            };
            if !ok {
                problems.push(format!("{} {path} as {who} -> {status}", r.method));
            }
        }
    }
    let admin_routes = ROUTES.iter().filter(|r| r.role == Role::Admin).count();
    daemon.shutdown().await.unwrap();
    let detail = format!(
        "{} routes ({admin_routes} admin), {requests} requests, {} violations {problems:?}",
        ROUTES.len(),
        problems.len()
    );
    if problems.is_empty() && admin_routes > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- criterion 7 --------------------------------------------------------

async fn wait_success(daemon: &Daemon, id: &str, after_ms: i64, limit: Duration) -> Option<i64> {
    let deadline = Instant::now() + limit;
    while Instant::now() < deadline {
        if let Some(t) = daemon
            .pipeline()
            .status(id)
            .and_then(|s| s.last_success_ms)
            .filter(|t| *t >= after_ms)
        {
            return Some(t);
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    None
}

async fn runtime_plugin() -> Verdict {
    const INTERVAL: i64 = 1000;
    let dir = tempfile::tempdir().unwrap();
    let clock: SharedClock = Arc::new(SystemClock);
    let running = serve_topology(TopologyConfig::reference().ephemeral(), clock.clone())
        .await
        .unwrap();
    let mut specs = running.collector_specs(INTERVAL, 500);
    let new_id = "netdata-n5";
    let i = specs.iter().position(|s| s.id == new_id).unwrap();
    let plugged = specs.remove(i);
    let cfg = with_free_port(daemon_config(dir.path(), specs));

    let daemon = Daemon::start(cfg.clone(), clock.clone()).await.unwrap();
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let stats = running.stats("n5", ToolKind::Netdata).unwrap();
    let untouched_before = stats.requests() == 0;

    let posted = clock.now_ms();
    let status = reqwest::Client::new()
        .post(format!("http://{}/api/v1/admin/collectors", daemon.addr()))
        .bearer_auth(ADMIN)
        .json(&plugged)
        .send()
        .await
        .unwrap()
        .status();
    let first = wait_success(&daemon, new_id, posted, Duration::from_secs(5)).await;
    let first_request = stats.first_request_ms();
    daemon.shutdown().await.unwrap();

    let restarted_at = clock.now_ms();
    let daemon = Daemon::start(cfg, clock.clone()).await.unwrap();
    let present = daemon
        .pipeline()
        .collector(new_id)
        .is_some_and(|s| s.enabled);
    let after_restart = wait_success(&daemon, new_id, restarted_at, Duration::from_secs(5)).await;
    let key = canonical_series_key(
        THROUGHPUT,
        &[
            ("node".into(), "n5".into()),
            ("tool".into(), "netdata".into()),
        ],
    )
    .unwrap();
    let stored = daemon
        .store()
        .read_points(&key, posted - 60_000, i64::MAX)
        .len();
    daemon.shutdown().await.unwrap();
    running.shutdown().await;

    let lag = first.map(|t| t - posted);
    let restart_lag = after_restart.map(|t| t - restarted_at);
    let detail = format!(
        "POST -> {status}, first successful scrape after {lag:?} ms (endpoint first hit at {:?} ms), \
         survives restart: {present}, first scrape after restart {restart_lag:?} ms, {stored} points stored",
        first_request.map(|t| t - posted)
    );
    let within = |l: Option<i64>| l.is_some_and(|l| l <= 2 * INTERVAL);
    if untouched_before
        && status.as_u16() == 201
        && within(lag)
        && present
        && within(restart_lag)
        && stored > 0
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}
