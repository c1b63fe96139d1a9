use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use proptest::prelude::*;
use tempfile::TempDir;

use super::*;
use crate::adapters::{Adapter, Conversion, MappingRule, MappingTable, RawReading};
use crate::clock::ManualClock;
use crate::model::{MetricDef, MetricKind, THROUGHPUT};
use crate::selector::Selector;
use crate::store::StoreConfig;

fn sample(key: &str, ts: i64, value: f64) -> MetricSample {
    MetricSample::new(key.parse().unwrap(), ts, value, MetricKind::Gauge).unwrap()
}

#[test]
fn filter_keeps_allowlisted_in_order() {
    let policy = FilterPolicy::new([THROUGHPUT]).unwrap();
    let a = sample("throughput_bytes_per_second{node=n1,tool=netdata}", 1, 1.0);
    let b = sample("disk_free{node=n1,tool=prometheus}", 1, 1.0);
    let c = sample("throughput_bytes_per_second{node=n2,tool=netdata}", 1, 2.0);
    let (kept, rejected) = apply_filter(&policy, vec![a.clone(), b, c.clone()]);
    assert_eq!(kept, vec![a, c]);
    assert_eq!(rejected, 1);
    assert_eq!(apply_filter(&policy, vec![]), (vec![], 0));
    assert!(FilterPolicy::new(Vec::<String>::new()).is_err());
}

#[test]
fn filter_identity_on_catalog() {
    let samples: Vec<_> = canonical_metric_catalog()
        .iter()
        .map(|d| sample(&format!("{}{{node=n1,tool=x}}", d.name), 5, 1.0))
        .collect();
    assert_eq!(
        apply_filter(&FilterPolicy::canonical(), samples.clone()).0,
        samples
    );
}

#[test]
fn admission_examples() {
    let k = "m{node=a,tool=b}";
    let mut st = AdmissionState::new(0);
    assert_eq!(admit(&mut st, &sample(k, 1000, 1.0)), Admission::Accept);
    assert_eq!(
        admit(&mut st, &sample(k, 900, 1.0)),
        Admission::Reject(RejectReason::OutOfOrder)
    );
    assert_eq!(
        admit(&mut st, &sample(k, 1000, 1.0)),
        Admission::Reject(RejectReason::Duplicate)
    );
    assert_eq!(admit(&mut st, &sample(k, 1000, 2.0)), Admission::Accept);

    let mut st = AdmissionState::new(5000);
    assert_eq!(admit(&mut st, &sample(k, 10_000, 1.0)), Admission::Accept);
    assert_eq!(admit(&mut st, &sample(k, 7000, 1.0)), Admission::Accept);
    assert_eq!(st.last_accepted(&k.parse().unwrap()), Some(10_000));
    assert_eq!(
        admit(&mut st, &sample(k, 4999, 1.0)),
        Admission::Reject(RejectReason::OutOfOrder)
    );
}

proptest! {
    /// Replays a random stream against a direct transcription of the rule.
    #[test]
    fn admission_matches_replay(
        window in 0i64..50,
        stream in prop::collection::vec((0usize..3, 0i64..200, 0u8..3), 0..300),
    ) {
        let keys = ["a{node=n,tool=t}", "b{node=n,tool=t}", "c{node=n,tool=t}"];
        let mut st = AdmissionState::new(window);
        let mut oracle: Vec<Option<(i64, f64)>> = vec![None; 3];
        for (k, ts, v) in stream {
            let v = v as f64;
            let expected = match oracle[k] {
                None => true,
                Some((last, lv)) => !(ts < last - window || (ts == last && v == lv)),
            };
            if expected {
                oracle[k] = Some(match oracle[k] {
                    Some((last, lv)) if last > ts => (last, lv),
                    _ => (ts, v),
                });
            }
            let got = st.admit(&sample(keys[k], ts + 1, v));
            prop_assert_eq!(got == Admission::Accept, expected);
        }
    }
}

/// Adapter with scripted readings that records concurrent fetches.
struct Fake {
    name: &'static str,
    readings: Mutex<Vec<RawReading>>,
    fail: Mutex<bool>,
    delay_ms: u64,
    active: AtomicUsize,
    max_active: AtomicUsize,
    calls: AtomicUsize,
}

impl Fake {
    fn new(name: &'static str, delay_ms: u64) -> Arc<Self> {
        Arc::new(Self {
            name,
            readings: Mutex::new(vec![
                RawReading::new("tput", None, 10.0, ""),
                RawReading::new("disk", None, 5.0, ""),
                RawReading::new("unknown", None, 1.0, ""),
            ]),
            fail: Mutex::new(false),
            delay_ms,
            active: AtomicUsize::new(0),
            max_active: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        })
    }
}

#[async_trait]
impl Adapter for Fake {
    fn name(&self) -> &str {
        self.name
    }
    fn default_port(&self) -> u16 {
        1
    }
    fn mapping(&self) -> Vec<MappingRule> {
        vec![
            MappingRule::new("", "tput", THROUGHPUT, Conversion::None),
            MappingRule::new("", "disk", "disk_free_bytes", Conversion::None),
        ]
    }
    fn extra_metrics(&self) -> Vec<MetricDef> {
        vec![MetricDef::new(
            "disk_free_bytes",
            MetricKind::Gauge,
            "bytes",
        )]
    }
    async fn fetch(
        &self,
        _: &CollectorSpec,
        w: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let n = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_active.fetch_max(n, Ordering::SeqCst);
        if self.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.delay_ms)).await;
        }
        self.active.fetch_sub(1, Ordering::SeqCst);
        if *self.fail.lock() {
            return Err(FetchError::Unreachable("down".into()));
        }
        let mut out = self.readings.lock().clone();
        for r in &mut out {
            r.ts = Some(w.end_ms);
            r.value += (w.end_ms / 1000) as f64;
        }
        Ok(out)
    }
}

struct Rig {
    _dir: TempDir,
    clock: Arc<ManualClock>,
    fake: Arc<Fake>,
    pipeline: Pipeline,
}

fn rig(delay_ms: u64, config: PipelineConfig) -> Rig {
    let dir = TempDir::new().unwrap();
    let store = Arc::new(Store::open(dir.path(), StoreConfig::default()).unwrap());
    let registry = Arc::new(AdapterRegistry::empty(MappingTable::default()));
    let fake = Fake::new("fake", delay_ms);
    registry.register(fake.clone()).unwrap();
    let clock = Arc::new(ManualClock::new(1_000_000));
    let pipeline = Pipeline::new(registry, store, clock.clone(), config).unwrap();
    Rig {
        _dir: dir,
        clock,
        fake,
        pipeline,
    }
}

fn spec(id: &str, node: &str) -> CollectorSpec {
    let mut s = CollectorSpec::new(id, "fake", "127.0.0.1", 1, node);
    s.interval_ms = 1000;
    s.timeout_ms = 500;
    s
}

fn no_jitter() -> PipelineConfig {
    PipelineConfig {
        jitter_ms: 0,
        ..PipelineConfig::default()
    }
}

fn names(store: &Store) -> BTreeSet<String> {
    store
        .list_series(&Selector::all())
        .iter()
        .map(|k| k.name().to_string())
        .collect()
}

#[tokio::test]
async fn scrapes_filter_and_self_metrics() {
    let r = rig(0, no_jitter());
    r.pipeline.add_collector(spec("c1", "n1")).unwrap();
    for _ in 0..60 {
        let outs = r.pipeline.tick_and_wait().await;
        assert_eq!(outs.len(), 1);
        r.clock.advance(1000);
    }
    let store = r.pipeline.store();
    let got = names(store);
    assert!(got.contains(THROUGHPUT));
    assert!(!got.contains("disk_free_bytes"));
    for n in &got {
        assert!(
            n == THROUGHPUT || crate::model::is_self_metric(n),
            "unexpected {n}"
        );
    }
    let key: SeriesKey = "throughput_bytes_per_second{node=n1,tool=fake}"
        .parse()
        .unwrap();
    assert_eq!(store.read_points(&key, 0, i64::MAX).len(), 60);
    let st = r.pipeline.status("c1").unwrap();
    assert_eq!(st.successes, 60);

    let ok: SeriesKey = "scrape_success_total{collector=c1,node=n1,tool=netgraf}"
        .parse()
        .unwrap();
    assert_eq!(store.read_points(&ok, 0, i64::MAX).last().unwrap().1, 60.0);
    let filtered: SeriesKey =
        "samples_dropped_total{collector=c1,node=n1,reason=filtered,tool=netgraf}"
            .parse()
            .unwrap();
    assert_eq!(
        store.read_points(&filtered, 0, i64::MAX).last().unwrap().1,
        60.0
    );
    let unmapped: SeriesKey =
        "samples_dropped_total{collector=c1,node=n1,reason=unmapped,tool=netgraf}"
            .parse()
            .unwrap();
    assert_eq!(
        store.read_points(&unmapped, 0, i64::MAX).last().unwrap().1,
        60.0
    );
}

#[tokio::test]
async fn all_down_only_self_metrics() {
    let r = rig(0, no_jitter());
    *r.fake.fail.lock() = true;
    r.pipeline.add_collector(spec("c1", "n1")).unwrap();
    for _ in 0..5 {
        r.pipeline.tick_and_wait().await;
        r.clock.advance(1000);
    }
    let got = names(r.pipeline.store());
    assert!(
        got.iter().all(|n| crate::model::is_self_metric(n)),
        "{got:?}"
    );
    let fails: SeriesKey = "scrape_failures_total{collector=c1,node=n1,tool=netgraf}"
        .parse()
        .unwrap();
    assert_eq!(
        r.pipeline
            .store()
            .read_points(&fails, 0, i64::MAX)
            .last()
            .unwrap()
            .1,
        5.0
    );
    assert_eq!(r.pipeline.status("c1").unwrap().failures, 5);
}

#[tokio::test]
async fn allowlist_excluding_everything() {
    let cfg = PipelineConfig {
        allowlist: vec!["nothing_matches".into()],
        ..no_jitter()
    };
    let r = rig(0, cfg);
    r.pipeline.add_collector(spec("c1", "n1")).unwrap();
    for _ in 0..3 {
        r.pipeline.tick_and_wait().await;
        r.clock.advance(1000);
    }
    let got = names(r.pipeline.store());
    assert!(!got.is_empty());
    assert!(
        got.iter().all(|n| crate::model::is_self_metric(n)),
        "{got:?}"
    );
}

#[tokio::test]
async fn no_overlapping_fetches_per_collector() {
    let r = rig(30, no_jitter());
    r.pipeline.add_collector(spec("c1", "n1")).unwrap();
    let mut handles = Vec::new();
    for _ in 0..20 {
        handles.extend(r.pipeline.tick());
        r.clock.advance(1000);
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    for h in handles {
        h.await.unwrap();
    }
    assert_eq!(r.fake.max_active.load(Ordering::SeqCst), 1);
    let st = r.pipeline.status("c1").unwrap();
    assert!(st.skipped_overlaps > 0);
    assert_eq!(st.successes as usize, r.fake.calls.load(Ordering::SeqCst));
}

#[tokio::test]
async fn duplicate_collector_and_removal() {
    let r = rig(0, no_jitter());
    r.pipeline.add_collector(spec("c1", "n1")).unwrap();
    assert!(matches!(
        r.pipeline.add_collector(spec("c1", "n2")),
        Err(PipelineError::DuplicateCollector(_))
    ));
    let mut bad = spec("c2", "n1");
    bad.tool = "nope".into();
    assert!(matches!(
        r.pipeline.add_collector(bad),
        Err(PipelineError::InvalidSpec(_))
    ));
    r.pipeline.disable_collector("c1").unwrap();
    assert!(r.pipeline.tick_and_wait().await.is_empty());
    r.pipeline.remove_collector("c1").unwrap();
    assert!(r.pipeline.collectors().is_empty());
}

#[tokio::test]
async fn parallel_collectors_run_concurrently() {
    let cfg = PipelineConfig {
        parallelism: 4,
        ..no_jitter()
    };
    let r = rig(40, cfg);
    for i in 0..8 {
        r.pipeline
            .add_collector(spec(&format!("c{i}"), &format!("n{i}")))
            .unwrap();
    }
    r.pipeline.tick_and_wait().await;
    assert_eq!(r.fake.max_active.load(Ordering::SeqCst), 4);
}

#[tokio::test]
async fn counters_resume_after_restart() {
    let dir = TempDir::new().unwrap();
    let clock = Arc::new(ManualClock::new(1_000_000));
    for round in 0..2 {
        let store = Arc::new(Store::open(dir.path(), StoreConfig::default()).unwrap());
        let registry = Arc::new(AdapterRegistry::empty(MappingTable::default()));
        registry.register(Fake::new("fake", 0)).unwrap();
        let p = Pipeline::new(registry, store.clone(), clock.clone(), no_jitter()).unwrap();
        p.add_collector(spec("c1", "n1")).unwrap();
        for _ in 0..3 {
            p.tick_and_wait().await;
            clock.advance(1000);
        }
        let ok: SeriesKey = "scrape_success_total{collector=c1,node=n1,tool=netgraf}"
            .parse()
            .unwrap();
        assert_eq!(
            store.read_points(&ok, 0, i64::MAX).last().unwrap().1,
            3.0 * (round + 1) as f64
        );
        store.close().unwrap();
    }
}

#[tokio::test]
async fn stored_series_strictly_increasing() {
    let r = rig(0, PipelineConfig::default());
    for i in 0..3 {
        let mut s = spec(&format!("c{i}"), "n1");
        s.interval_ms = 700 + i * 100;
        r.pipeline.add_collector(s).unwrap();
    }
    for _ in 0..200 {
        r.pipeline.tick_and_wait().await;
        r.clock.advance(97);
    }
    let store = r.pipeline.store();
    for key in store.list_series(&Selector::all()) {
        let pts = store.read_points(&key, 0, i64::MAX);
        assert!(pts.windows(2).all(|w| w[0].0 < w[1].0), "{key}");
    }
}
