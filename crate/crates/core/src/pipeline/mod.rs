//! Scrape scheduling, elimination filter, admission and hand-off to the store.

mod schedule;

#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{watch, Notify, Semaphore};
use tokio::task::JoinHandle;
use tracing::{debug, error, warn};

pub use schedule::{schedule_tick, ScrapePlan};

use crate::adapters::{
    normalize, AdapterRegistry, CollectorSpec, FetchError, ScrapeWindow, SpecError,
};
use crate::clock::SharedClock;
use crate::model::{
    canonical_metric_catalog, canonical_series_key, MetricSample, SeriesKey, NODE_LABEL,
    SAMPLES_DROPPED, SAMPLES_INGESTED, SCRAPE_DURATION, SCRAPE_FAILURES, SCRAPE_SUCCESS, SELF_TOOL,
    TOOL_LABEL,
};
use crate::store::{Store, StoreError};

pub const DEFAULT_INTERVAL_MS: i64 = 10_000;
pub const DEFAULT_JITTER_MS: i64 = 500;
pub const DEFAULT_PARALLELISM: usize = 8;
/// Label carrying the collector id on self-metrics.
pub const COLLECTOR_LABEL: &str = "collector";
pub const REASON_LABEL: &str = "reason";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("collector `{0}` already exists")]
    DuplicateCollector(String),
    #[error("no collector `{0}`")]
    UnknownCollector(String),
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error("allowlist must not be empty")]
    EmptyAllowlist,
    #[error("invalid pipeline setting `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("store failure: {0}")]
    Store(#[from] StoreError),
}

/// Keeps only samples whose metric name is on the allowlist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterPolicy {
    allowlist: BTreeSet<String>,
}

impl FilterPolicy {
    pub fn new<I, S>(names: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let allowlist: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if allowlist.is_empty() {
            return Err(PipelineError::EmptyAllowlist);
        }
        Ok(Self { allowlist })
    }

    /// Allowlist equal to the built-in catalog.
    pub fn canonical() -> Self {
        Self::new(canonical_metric_catalog().into_iter().map(|d| d.name))
            .expect("catalog is not empty")
    }

    pub fn allows(&self, name: &str) -> bool {
        self.allowlist.contains(name)
    }

    pub fn allowlist(&self) -> &BTreeSet<String> {
        &self.allowlist
    }
}

/// Returns the allowed samples in order, plus the number removed.
pub fn apply_filter(
    policy: &FilterPolicy,
    samples: Vec<MetricSample>,
) -> (Vec<MetricSample>, usize) {
    let before = samples.len();
    let kept: Vec<_> = samples
        .into_iter()
        .filter(|s| policy.allows(s.key.name()))
        .collect();
    let rejected = before - kept.len();
    (kept, rejected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    OutOfOrder,
    Duplicate,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::OutOfOrder => "out_of_order",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accept,
    Reject(RejectReason),
}

/// Last accepted timestamp (and its value) per series.
#[derive(Debug, Clone, Default)]
pub struct AdmissionState {
    window_ms: i64,
    last: HashMap<SeriesKey, (i64, f64)>,
}

impl AdmissionState {
    pub fn new(out_of_order_window_ms: i64) -> Self {
        Self {
            window_ms: out_of_order_window_ms.max(0),
            last: HashMap::new(),
        }
    }

    pub fn window_ms(&self) -> i64 {
        self.window_ms
    }

    pub fn last_accepted(&self, key: &SeriesKey) -> Option<i64> {
        self.last.get(key).map(|(ts, _)| *ts)
    }

    /// Records `(ts, value)` as the newest accepted point unless one newer is
    /// already known.
    pub fn seed(&mut self, key: &SeriesKey, ts: i64, value: f64) {
        let entry = self.last.entry(key.clone()).or_insert((ts, value));
        if ts > entry.0 {
            *entry = (ts, value);
        }
    }

    pub fn admit(&mut self, sample: &MetricSample) -> Admission {
        self.admit_within(sample, self.window_ms)
    }

    pub fn admit_within(&mut self, sample: &MetricSample, window_ms: i64) -> Admission {
        match self.last.get_mut(&sample.key) {
            None => {
                self.last
                    .insert(sample.key.clone(), (sample.ts, sample.value));
                Admission::Accept
            }
            Some((last, last_value)) => {
                if sample.ts < *last - window_ms.max(0) {
                    Admission::Reject(RejectReason::OutOfOrder)
                } else if sample.ts == *last && sample.value == *last_value {
                    Admission::Reject(RejectReason::Duplicate)
                } else {
                    if sample.ts >= *last {
                        *last = sample.ts;
                        *last_value = sample.value;
                    }
                    Admission::Accept
                }
            }
        }
    }
}

/// Free-function form of [`AdmissionState::admit`].
pub fn admit(state: &mut AdmissionState, sample: &MetricSample) -> Admission {
    state.admit(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub interval_ms: i64,
    pub jitter_ms: i64,
    pub parallelism: usize,
    pub allowlist: Vec<String>,
    /// Admission window for sources without their own default.
    pub out_of_order_window_ms: i64,
    /// Per-tool admission windows; override adapter defaults.
    pub out_of_order_windows: BTreeMap<String, i64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            interval_ms: DEFAULT_INTERVAL_MS,
            jitter_ms: DEFAULT_JITTER_MS,
            parallelism: DEFAULT_PARALLELISM,
            allowlist: canonical_metric_catalog()
                .into_iter()
                .map(|d| d.name)
                .collect(),
            out_of_order_window_ms: 0,
            out_of_order_windows: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |field: &str, reason: &str| {
            Err(PipelineError::InvalidConfig {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.interval_ms < 1 {
            return bad("interval_ms", "must be positive");
        }
        if self.jitter_ms < 0 {
            return bad("jitter_ms", "must not be negative");
        }
        if self.parallelism == 0 {
            return bad("parallelism", "must be at least 1");
        }
        if self.allowlist.is_empty() {
            return bad("allowlist", "must not be empty");
        }
        if self.out_of_order_window_ms < 0 || self.out_of_order_windows.values().any(|w| *w < 0) {
            return bad("out_of_order_window_ms", "must not be negative");
        }
        Ok(())
    }
}

/// Live state of one collector, as reported by the admin API.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CollectorStatus {
    pub last_attempt_ms: Option<i64>,
    pub last_success_ms: Option<i64>,
    pub last_error: Option<String>,
    pub successes: u64,
    pub failures: u64,
    pub skipped_overlaps: u64,
}

/// Outcome of a single scrape.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrapeOutcome {
    pub spec_id: String,
    pub ts: i64,
    pub result: Result<usize, FetchError>,
    pub dropped: BTreeMap<&'static str, u64>,
}

struct Ingest {
    admission: AdmissionState,
    counters: HashMap<SeriesKey, f64>,
}

struct Inner {
    registry: Arc<AdapterRegistry>,
    store: Arc<Store>,
    clock: SharedClock,
    config: PipelineConfig,
    policy: RwLock<FilterPolicy>,
    plan: Mutex<ScrapePlan>,
    specs: RwLock<BTreeMap<String, CollectorSpec>>,
    status: RwLock<BTreeMap<String, CollectorStatus>>,
    last_scrape: Mutex<HashMap<String, i64>>,
    in_flight: Mutex<HashSet<String>>,
    ingest: Mutex<Ingest>,
    permits: Arc<Semaphore>,
    wake: Notify,
    fatal: Mutex<Option<String>>,
}

/// The scrape loop. Cheap to clone; all clones share state.
#[derive(Clone)]
pub struct Pipeline {
    inner: Arc<Inner>,
}

impl Pipeline {
    pub fn new(
        registry: Arc<AdapterRegistry>,
        store: Arc<Store>,
        clock: SharedClock,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let policy = FilterPolicy::new(config.allowlist.iter().cloned())?;
        let seed = clock.now_ms() as u64;
        Ok(Self {
            inner: Arc::new(Inner {
                registry,
                store,
                plan: Mutex::new(ScrapePlan::new(config.jitter_ms, seed)),
                permits: Arc::new(Semaphore::new(config.parallelism)),
                ingest: Mutex::new(Ingest {
                    admission: AdmissionState::new(config.out_of_order_window_ms),
                    counters: HashMap::new(),
                }),
                clock,
                config,
                policy: RwLock::new(policy),
                specs: RwLock::new(BTreeMap::new()),
                status: RwLock::new(BTreeMap::new()),
                last_scrape: Mutex::new(HashMap::new()),
                in_flight: Mutex::new(HashSet::new()),
                wake: Notify::new(),
                fatal: Mutex::new(None),
            }),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.inner.store
    }

    pub fn registry(&self) -> &Arc<AdapterRegistry> {
        &self.inner.registry
    }

    pub fn clock(&self) -> &SharedClock {
        &self.inner.clock
    }

    pub fn policy(&self) -> FilterPolicy {
        self.inner.policy.read().clone()
    }

    pub fn set_policy(&self, policy: FilterPolicy) {
        *self.inner.policy.write() = policy;
    }

    /// Adds a collector to the live plan. Enabled collectors are due at once.
    pub fn add_collector(&self, spec: CollectorSpec) -> Result<(), PipelineError> {
        self.inner.registry.validate_spec(&spec)?;
        let mut specs = self.inner.specs.write();
        if specs.contains_key(&spec.id) {
            return Err(PipelineError::DuplicateCollector(spec.id));
        }
        if spec.enabled {
            self.inner
                .plan
                .lock()
                .insert(&spec.id, spec.interval_ms, self.inner.clock.now_ms());
        }
        self.inner
            .status
            .write()
            .insert(spec.id.clone(), CollectorStatus::default());
        specs.insert(spec.id.clone(), spec);
        drop(specs);
        self.inner.wake.notify_one();
        Ok(())
    }

    pub fn remove_collector(&self, id: &str) -> Result<CollectorSpec, PipelineError> {
        let spec = self
            .inner
            .specs
            .write()
            .remove(id)
            .ok_or_else(|| PipelineError::UnknownCollector(id.to_string()))?;
        self.inner.plan.lock().remove(id);
        self.inner.status.write().remove(id);
        Ok(spec)
    }

    /// Takes a collector out of the plan but keeps its spec.
    pub fn disable_collector(&self, id: &str) -> Result<CollectorSpec, PipelineError> {
        let mut specs = self.inner.specs.write();
        let spec = specs
            .get_mut(id)
            .ok_or_else(|| PipelineError::UnknownCollector(id.to_string()))?;
        spec.enabled = false;
        self.inner.plan.lock().remove(id);
        Ok(spec.clone())
    }

    pub fn collectors(&self) -> Vec<CollectorSpec> {
        self.inner.specs.read().values().cloned().collect()
    }

    pub fn collector(&self, id: &str) -> Option<CollectorSpec> {
        self.inner.specs.read().get(id).cloned()
    }

    pub fn status(&self, id: &str) -> Option<CollectorStatus> {
        self.inner.status.read().get(id).cloned()
    }

    pub fn statuses(&self) -> BTreeMap<String, CollectorStatus> {
        self.inner.status.read().clone()
    }

    pub fn next_due(&self, id: &str) -> Option<i64> {
        self.inner.plan.lock().next_due(id)
    }

    /// Largest interval among enabled collectors.
    pub fn max_interval_ms(&self) -> i64 {
        self.inner
            .specs
            .read()
            .values()
            .filter(|s| s.enabled)
            .map(|s| s.interval_ms)
            .max()
            .unwrap_or(self.inner.config.interval_ms)
    }

    /// Set when a store failure stopped ingestion.
    pub fn fatal_error(&self) -> Option<String> {
        self.inner.fatal.lock().clone()
    }

    /// Starts every due scrape and returns their handles. Collectors whose
    /// previous scrape is still running are skipped for this slot.
    pub fn tick(&self) -> Vec<JoinHandle<ScrapeOutcome>> {
        let now = self.inner.clock.now_ms();
        let due = self.inner.plan.lock().tick(now);
        let mut handles = Vec::new();
        for id in due {
            if !self.inner.in_flight.lock().insert(id.clone()) {
                if let Some(st) = self.inner.status.write().get_mut(&id) {
                    st.skipped_overlaps += 1;
                }
                debug!(collector = %id, "previous scrape still running, slot skipped");
                continue;
            }
            let this = self.clone();
            handles.push(tokio::spawn(async move {
                let permit = this.inner.permits.clone().acquire_owned().await;
                let outcome = this.scrape(&id, now).await;
                drop(permit);
                this.inner.in_flight.lock().remove(&id);
                outcome
            }));
        }
        handles
    }

    /// Runs one tick and waits for every scrape it started.
    pub async fn tick_and_wait(&self) -> Vec<ScrapeOutcome> {
        let mut out = Vec::new();
        for h in self.tick() {
            match h.await {
                Ok(o) => out.push(o),
                Err(e) => error!("scrape task failed: {e}"),
            }
        }
        out
    }

    /// Scrapes one collector now, outside the plan.
    pub async fn scrape_now(&self, id: &str) -> Option<ScrapeOutcome> {
        if !self.inner.in_flight.lock().insert(id.to_string()) {
            return None;
        }
        let now = self.inner.clock.now_ms();
        let out = self.scrape(id, now).await;
        self.inner.in_flight.lock().remove(id);
        Some(out)
    }

    /// Scheduler loop. Returns when `shutdown` flips to true, or with an
    /// error once the store has failed.
    pub async fn run(&self, mut shutdown: watch::Receiver<bool>) -> Result<(), PipelineError> {
        let mut running: Vec<JoinHandle<ScrapeOutcome>> = Vec::new();
        loop {
            if *shutdown.borrow() {
                break;
            }
            if let Some(msg) = self.fatal_error() {
                return Err(PipelineError::Store(StoreError::Io(std::io::Error::other(
                    msg,
                ))));
            }
            running.retain(|h| !h.is_finished());
            running.extend(self.tick());
            let now = self.inner.clock.now_ms();
            let wait = match self.inner.plan.lock().earliest_due() {
                Some(due) => self.inner.clock.wall_duration(due - now),
                None => Duration::from_millis(250),
            };
            let wait = wait.clamp(Duration::from_millis(1), Duration::from_millis(250));
            tokio::select! {
                _ = tokio::time::sleep(wait) => {}
                _ = self.inner.wake.notified() => {}
                _ = shutdown.changed() => {}
            }
        }
        for h in running {
            let _ = h.await;
        }
        Ok(())
    }

    async fn scrape(&self, id: &str, now: i64) -> ScrapeOutcome {
        let mut outcome = ScrapeOutcome {
            spec_id: id.to_string(),
            ts: now,
            result: Ok(0),
            dropped: BTreeMap::new(),
        };
        let Some(spec) = self.collector(id) else {
            outcome.result = Err(FetchError::Other("collector removed".into()));
            return outcome;
        };
        let Some(adapter) = self.inner.registry.get(&spec.tool) else {
            outcome.result = Err(FetchError::Other(format!("no adapter for `{}`", spec.tool)));
            return outcome;
        };
        let start_ms = self
            .inner
            .last_scrape
            .lock()
            .insert(id.to_string(), now)
            .filter(|prev| *prev < now)
            .unwrap_or(now - spec.interval_ms);
        let window = ScrapeWindow {
            start_ms,
            end_ms: now,
        };
        let started = Instant::now();
        let fetched = match tokio::time::timeout(
            Duration::from_millis(spec.timeout_ms.max(1) as u64),
            adapter.fetch(&spec, window),
        )
        .await
        {
            Ok(r) => r,
            Err(_) => Err(FetchError::Timeout),
        };
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;

        let ooo_window = self
            .inner
            .config
            .out_of_order_windows
            .get(&spec.tool)
            .copied()
            .or_else(|| adapter.out_of_order_window_ms())
            .unwrap_or(self.inner.config.out_of_order_window_ms);

        let mut batch: Vec<(SeriesKey, i64, f64)> = Vec::new();
        match fetched {
            Ok(readings) => {
                let norm = normalize(
                    &spec.tool,
                    &spec.node_label,
                    &readings,
                    &self.inner.registry.mapping_for(&spec.tool),
                    &self.inner.registry.catalog(),
                    now,
                );
                bump(&mut outcome.dropped, "unmapped", norm.dropped);
                let policy = self.policy();
                let (mut kept, filtered) = apply_filter(&policy, norm.samples);
                // Tools may list newest first; admit oldest first.
                kept.sort_by_key(|s| s.ts);
                bump(&mut outcome.dropped, "filtered", filtered);
                let mut ingest = self.inner.ingest.lock();
                let mut stored = 0usize;
                for s in &kept {
                    if ingest.admission.last_accepted(&s.key).is_none() {
                        if let Some(ts) = self.inner.store.last_ts(&s.key) {
                            let v = self.last_value(&s.key, ts).unwrap_or(f64::NAN);
                            ingest.admission.seed(&s.key, ts, v);
                        }
                    }
                    match ingest.admission.admit_within(s, ooo_window) {
                        Admission::Accept => batch.push((s.key.clone(), s.ts, s.value)),
                        Admission::Reject(r) => bump(&mut outcome.dropped, r.as_str(), 1),
                    }
                }
                for res in self.inner.store.insert_batch(&batch) {
                    match res {
                        Ok(()) => stored += 1,
                        Err(e @ (StoreError::StoreClosed | StoreError::Io(_))) => {
                            self.set_fatal(&e);
                            bump(&mut outcome.dropped, "store", 1);
                        }
                        Err(_) => bump(&mut outcome.dropped, "store", 1),
                    }
                }
                outcome.result = Ok(stored);
                self.write_self_metrics(&mut ingest, &spec, now, elapsed_ms, &outcome);
                drop(ingest);
                let mut st = self.inner.status.write();
                if let Some(st) = st.get_mut(id) {
                    st.last_attempt_ms = Some(now);
                    st.last_success_ms = Some(now);
                    st.last_error = None;
                    st.successes += 1;
                }
            }
            Err(e) => {
                debug!(collector = %id, error = %e, "scrape failed");
                outcome.result = Err(e.clone());
                let mut ingest = self.inner.ingest.lock();
                self.write_self_metrics(&mut ingest, &spec, now, elapsed_ms, &outcome);
                drop(ingest);
                let mut st = self.inner.status.write();
                if let Some(st) = st.get_mut(id) {
                    st.last_attempt_ms = Some(now);
                    st.last_error = Some(e.to_string());
                    st.failures += 1;
                }
            }
        }
        outcome
    }

    fn last_value(&self, key: &SeriesKey, ts: i64) -> Option<f64> {
        self.inner
            .store
            .read_points(key, ts, ts + 1)
            .last()
            .map(|p| p.1)
    }

    fn set_fatal(&self, e: &StoreError) {
        let mut fatal = self.inner.fatal.lock();
        if fatal.is_none() {
            error!("store rejected writes, ingestion stops: {e}");
            *fatal = Some(e.to_string());
        }
    }

    fn write_self_metrics(
        &self,
        ingest: &mut Ingest,
        spec: &CollectorSpec,
        now: i64,
        elapsed_ms: f64,
        o: &ScrapeOutcome,
    ) {
        let base = vec![
            (NODE_LABEL.to_string(), spec.node_label.clone()),
            (TOOL_LABEL.to_string(), SELF_TOOL.to_string()),
            (COLLECTOR_LABEL.to_string(), spec.id.clone()),
        ];
        let key = |name: &str, extra: Option<&str>| {
            let mut labels = base.clone();
            if let Some(reason) = extra {
                labels.push((REASON_LABEL.to_string(), reason.to_string()));
            }
            canonical_series_key(name, &labels)
        };
        let mut points: Vec<(SeriesKey, f64)> = Vec::new();
        let counter = |ingest: &mut Ingest, k: SeriesKey, inc: u64, emit_zero: bool| {
            let known = ingest.counters.contains_key(&k);
            if !known {
                let start = self
                    .inner
                    .store
                    .last_ts(&k)
                    .and_then(|ts| self.last_value(&k, ts))
                    .unwrap_or(0.0);
                if start == 0.0 && inc == 0 && !emit_zero {
                    return None;
                }
                ingest.counters.insert(k.clone(), start);
            }
            let v = ingest.counters.get_mut(&k).expect("inserted above");
            *v += inc as f64;
            Some((k, *v))
        };
        let ok = o.result.is_ok();
        let stored = *o.result.as_ref().unwrap_or(&0) as u64;
        let Ok(k) = key(SCRAPE_DURATION, None) else {
            warn!(collector = %spec.id, "cannot label self-metrics");
            return;
        };
        points.push((k, elapsed_ms));
        for (name, inc) in [
            (SCRAPE_SUCCESS, ok as u64),
            (SCRAPE_FAILURES, (!ok) as u64),
            (SAMPLES_INGESTED, stored),
        ] {
            if let Ok(k) = key(name, None) {
                points.extend(counter(ingest, k, inc, true));
            }
        }
        for reason in ["unmapped", "filtered", "out_of_order", "duplicate", "store"] {
            let inc = o.dropped.get(reason).copied().unwrap_or(0);
            if let Ok(k) = key(SAMPLES_DROPPED, Some(reason)) {
                points.extend(counter(ingest, k, inc, false));
            }
        }
        let batch: Vec<_> = points
            .into_iter()
            .filter_map(|(k, v)| {
                let ts = match self.inner.store.last_ts(&k) {
                    Some(last) if last >= now => return None,
                    _ => now,
                };
                Some((k, ts, v))
            })
            .collect();
        for res in self.inner.store.insert_batch(&batch) {
            if let Err(e @ (StoreError::StoreClosed | StoreError::Io(_))) = res {
                self.set_fatal(&e);
            }
        }
    }
}

fn bump(map: &mut BTreeMap<&'static str, u64>, reason: &'static str, n: usize) {
    if n > 0 {
        *map.entry(reason).or_insert(0) += n as u64;
    }
}
