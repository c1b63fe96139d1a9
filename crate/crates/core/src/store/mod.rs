//! Embedded time-series store.
//!
//! Each series keeps one open chunk in memory plus sealed, immutable chunks
//! that are persisted as segment files the moment they seal. Every accepted
//! write goes to the write-ahead log before the call returns. Recovery loads
//! segments, replays the log on top (skipping points already sealed) and
//! rebuilds the label index.
//!
//! Data directory layout:
//!
//! ```text
//! LOCK                 single-writer lock
//! wal.log              write-ahead log
//! segments/NNNNN.seg   one sealed chunk per file
//! rollups/<res>.seg    downsampled data for one retention rule
//! index/series         canonical keys, rewritten on open
//! ```

mod index;
pub mod ops;
pub mod segment;
pub mod wal;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

pub use index::SeriesIndex;
pub use ops::{Aggregator, Point};

use crate::model::SeriesKey;
use crate::selector::{Selector, SelectorError};
use segment::SegmentChunk;
use wal::Wal;

pub const DEFAULT_CHUNK_CAPACITY: usize = 1024;
pub const MIN_STEP_MS: i64 = 1000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("out-of-order append to {series}: ts {ts} <= last {last}")]
    OutOfOrderAppend { series: String, ts: i64, last: i64 },
    #[error("invalid point ts={ts} value={value}")]
    InvalidPoint { ts: i64, value: f64 },
    #[error("store is closed")]
    StoreClosed,
    #[error("data directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error(transparent)]
    InvalidSelector(#[from] SelectorError),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid retention policy: {0}")]
    InvalidPolicy(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub chunk_capacity: usize,
    /// fsync the log on every write instead of relying on the page cache.
    pub sync_writes: bool,
    /// Log size that triggers a rewrite down to the open chunks.
    pub wal_compact_bytes: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            chunk_capacity: DEFAULT_CHUNK_CAPACITY,
            sync_writes: false,
            wal_compact_bytes: 64 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptSegment {
    pub file: PathBuf,
    pub offset: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RecoveryReport {
    pub segments_loaded: usize,
    pub wal_records: usize,
    pub wal_replayed: usize,
    pub wal_torn_bytes: u64,
    pub corrupt: Vec<CorruptSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownsampleRule {
    pub resolution_ms: i64,
    pub aggregator: Aggregator,
    pub ttl_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionPolicy {
    pub raw_ttl_ms: i64,
    #[serde(default)]
    pub downsample_rules: Vec<DownsampleRule>,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        Self {
            raw_ttl_ms: 7 * 24 * 3600 * 1000,
            downsample_rules: Vec::new(),
        }
    }
}

impl RetentionPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.raw_ttl_ms <= 0 {
            return Err("raw_ttl_ms must be positive".into());
        }
        for (i, r) in self.downsample_rules.iter().enumerate() {
            if r.resolution_ms <= 0 || r.ttl_ms <= 0 {
                return Err(format!(
                    "downsample_rules[{i}]: resolution and ttl must be positive"
                ));
            }
            if r.aggregator == Aggregator::Rate {
                return Err(format!(
                    "downsample_rules[{i}]: rate is not a downsampling aggregator"
                ));
            }
            if i > 0 && r.resolution_ms <= self.downsample_rules[i - 1].resolution_ms {
                return Err(format!(
                    "downsample_rules[{i}]: resolutions must be strictly increasing"
                ));
            }
        }
        Ok(())
    }
}

/// Where a rollup tier's points come from. Always raw: averaging averages
/// would be wrong for uneven buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollupSource {
    Raw,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PurgeReport {
    pub purged_chunks: usize,
    pub freed_points: usize,
    pub rollup_points_written: usize,
    pub rollup_points_expired: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryFrame {
    pub series: SeriesKey,
    pub points: Vec<(i64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesSummary {
    pub key: SeriesKey,
    pub first_ts: i64,
    pub last_ts: i64,
    pub points: usize,
}

#[derive(Debug)]
struct Chunk {
    seg_id: u64,
    points: Vec<Point>,
}

#[derive(Debug, Default)]
struct Series {
    sealed: Vec<Arc<Chunk>>,
    open: Vec<Point>,
    rollups: BTreeMap<i64, Vec<Point>>,
}

impl Series {
    fn sealed_max(&self) -> Option<i64> {
        self.sealed
            .last()
            .and_then(|c| c.points.last())
            .map(|p| p.0)
    }

    fn last_ts(&self) -> Option<i64> {
        self.open.last().map(|p| p.0).or_else(|| self.sealed_max())
    }

    fn first_raw_ts(&self) -> Option<i64> {
        self.sealed
            .first()
            .and_then(|c| c.points.first())
            .or_else(|| self.open.first())
            .map(|p| p.0)
    }

    fn raw_len(&self) -> usize {
        self.open.len() + self.sealed.iter().map(|c| c.points.len()).sum::<usize>()
    }

    fn is_empty(&self) -> bool {
        self.raw_len() == 0 && self.rollups.values().all(Vec::is_empty)
    }

    /// Raw points in `[t0, t1)`, preceded by rollup points for older ranges
    /// that retention already purged. Finer tiers take precedence.
    fn collect(&self, t0: i64, t1: i64, out: &mut Vec<Point>) {
        let mut horizon = self.first_raw_ts().unwrap_or(i64::MAX);
        let mut older: Vec<&[Point]> = Vec::new();
        for tier in self.rollups.values() {
            let end = tier.partition_point(|p| p.0 < horizon);
            if end > 0 {
                older.push(&tier[..end]);
                horizon = tier[0].0;
            }
        }
        for part in older.into_iter().rev() {
            out.extend(part.iter().filter(|p| p.0 >= t0 && p.0 < t1));
        }
        for chunk in &self.sealed {
            let (first, last) = (chunk.points[0].0, chunk.points[chunk.points.len() - 1].0);
            if last < t0 || first >= t1 {
                continue;
            }
            out.extend(chunk.points.iter().filter(|p| p.0 >= t0 && p.0 < t1));
        }
        out.extend(self.open.iter().filter(|p| p.0 >= t0 && p.0 < t1));
    }
}

struct State {
    series: HashMap<SeriesKey, Series>,
    index: SeriesIndex,
    wal: Wal,
    next_seg: u64,
    closed: bool,
}

pub struct Store {
    dir: PathBuf,
    config: StoreConfig,
    state: RwLock<State>,
    report: RecoveryReport,
    _lock: File,
}

fn segments_dir(dir: &Path) -> PathBuf {
    dir.join("segments")
}

fn rollups_dir(dir: &Path) -> PathBuf {
    dir.join("rollups")
}

fn segment_path(dir: &Path, id: u64) -> PathBuf {
    segments_dir(dir).join(format!("{id:05}.seg"))
}

fn numbered_files(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("seg") {
            continue;
        }
        if let Some(n) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((n, path));
        }
    }
    out.sort();
    Ok(out)
}

fn quarantine(path: &Path) {
    let mut target = path.as_os_str().to_owned();
    target.push(".corrupt");
    if let Err(e) = fs::rename(path, &target) {
        warn!("failed to quarantine {}: {e}", path.display());
    }
}

impl Store {
    /// Opens (or creates) the store in `dir`, recovering whatever a previous
    /// process left behind.
    pub fn open(dir: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(segments_dir(&dir))?;
        fs::create_dir_all(rollups_dir(&dir))?;
        fs::create_dir_all(dir.join("index"))?;

        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join("LOCK"))?;
        if lock.try_lock().is_err() {
            return Err(StoreError::Locked(dir));
        }

        let mut report = RecoveryReport::default();
        let mut series: HashMap<SeriesKey, Series> = HashMap::new();
        let mut next_seg = 0;

        for (id, path) in numbered_files(&segments_dir(&dir))? {
            next_seg = next_seg.max(id + 1);
            let bytes = fs::read(&path)?;
            let chunks = match segment::decode(&bytes) {
                Ok(c) => c,
                Err(offset) => {
                    warn!("corrupt segment {} at offset {offset}", path.display());
                    report.corrupt.push(CorruptSegment {
                        file: path.clone(),
                        offset,
                    });
                    quarantine(&path);
                    continue;
                }
            };
            report.segments_loaded += 1;
            for chunk in chunks {
                let Ok(key) = SeriesKey::parse(&chunk.key) else {
                    report.corrupt.push(CorruptSegment {
                        file: path.clone(),
                        offset: 0,
                    });
                    continue;
                };
                if chunk.points.is_empty() {
                    continue;
                }
                let s = series.entry(key).or_default();
                if s.sealed_max().is_some_and(|m| m >= chunk.points[0].0) {
                    // Overlaps an earlier segment; the log replay covers any gap.
                    continue;
                }
                s.sealed.push(Arc::new(Chunk {
                    seg_id: id,
                    points: chunk.points,
                }));
            }
        }

        for (res, path) in numbered_files(&rollups_dir(&dir))? {
            match segment::decode(&fs::read(&path)?) {
                Ok(chunks) => {
                    for chunk in chunks {
                        if let Ok(key) = SeriesKey::parse(&chunk.key) {
                            series
                                .entry(key)
                                .or_default()
                                .rollups
                                .insert(res as i64, chunk.points);
                        }
                    }
                }
                Err(offset) => {
                    report.corrupt.push(CorruptSegment {
                        file: path.clone(),
                        offset,
                    });
                    quarantine(&path);
                }
            }
        }

        let (wal, records, torn) = Wal::open(&dir, config.sync_writes)?;
        report.wal_records = records.len();
        report.wal_torn_bytes = torn;

        let mut state = State {
            series,
            index: SeriesIndex::default(),
            wal,
            next_seg,
            closed: false,
        };
        for rec in records {
            let Ok(key) = SeriesKey::parse(&rec.key) else {
                continue;
            };
            if state
                .series
                .get(&key)
                .and_then(Series::sealed_max)
                .is_some_and(|m| rec.ts <= m)
            {
                continue;
            }
            if state
                .apply(&dir, &config, &key, rec.ts, rec.value, false)
                .is_ok()
            {
                report.wal_replayed += 1;
            }
        }
        state.series.retain(|_, s| !s.is_empty());
        state.index = SeriesIndex::build(state.series.keys());

        let listing: String = {
            let mut keys: Vec<String> = state.series.keys().map(ToString::to_string).collect();
            keys.sort();
            keys.into_iter().map(|k| k + "\n").collect()
        };
        fs::write(dir.join("index").join("series"), listing)?;

        info!(
            "store open: {} series, {} segments, {} log records replayed",
            state.series.len(),
            report.segments_loaded,
            report.wal_replayed
        );
        Ok(Self {
            dir,
            config,
            state: RwLock::new(state),
            report,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn recovery_report(&self) -> &RecoveryReport {
        &self.report
    }

    /// Appends one point; `ts` must be newer than everything stored for the
    /// series.
    pub fn append(&self, key: &SeriesKey, ts: i64, value: f64) -> Result<(), StoreError> {
        self.write_batch(&[(key.clone(), ts, value)], true)
            .remove(0)
    }

    pub fn append_batch(&self, points: &[(SeriesKey, i64, f64)]) -> Vec<Result<(), StoreError>> {
        self.write_batch(points, true)
    }

    /// Like `append_batch`, but a point older than the series head is placed
    /// into the open chunk as long as it is newer than the last sealed chunk.
    /// A point at an existing timestamp replaces the stored value.
    pub fn insert_batch(&self, points: &[(SeriesKey, i64, f64)]) -> Vec<Result<(), StoreError>> {
        self.write_batch(points, false)
    }

    fn write_batch(
        &self,
        points: &[(SeriesKey, i64, f64)],
        strict: bool,
    ) -> Vec<Result<(), StoreError>> {
        let mut state = self.state.write();
        if state.closed {
            return points
                .iter()
                .map(|_| Err(StoreError::StoreClosed))
                .collect();
        }
        let mut log = Vec::new();
        let mut results = Vec::with_capacity(points.len());
        for (key, ts, value) in points {
            let res = state.apply(&self.dir, &self.config, key, *ts, *value, strict);
            if res.is_ok() {
                wal::encode_record(&mut log, key, *ts, *value);
                if !state.index.contains(key) {
                    state.index.insert(key);
                }
            }
            results.push(res);
        }
        if let Err(e) = state.wal.write(&log) {
            warn!("write-ahead log failure, closing store: {e}");
            state.closed = true;
            let kind = e.kind();
            return results
                .into_iter()
                .map(|r| r.and_then(|_| Err(StoreError::Io(io::Error::new(kind, e.to_string())))))
                .collect();
        }
        if state.wal.len() > self.config.wal_compact_bytes {
            if let Err(e) = state.compact_wal() {
                warn!("log compaction failed: {e}");
            }
        }
        results
    }

    pub fn list_series(&self, selector: &Selector) -> Vec<SeriesKey> {
        let state = self.state.read();
        let mut keys = state.index.candidates(selector);
        keys.retain(|k| selector.matches(k));
        keys.sort();
        keys
    }

    /// Raw points of one series in `[t0, t1)`, including rollups where the raw
    /// data was purged.
    pub fn read_points(&self, key: &SeriesKey, t0: i64, t1: i64) -> Vec<Point> {
        let state = self.state.read();
        let mut out = Vec::new();
        if let Some(s) = state.series.get(key) {
            s.collect(t0, t1, &mut out);
        }
        out
    }

    pub fn query_range(
        &self,
        selector: &Selector,
        t0: i64,
        t1: i64,
        step_ms: i64,
        agg: Aggregator,
    ) -> Result<Vec<QueryFrame>, StoreError> {
        validate_range(t0, t1, step_ms)?;
        // Snapshot under the read lock, aggregate outside it.
        let snapshot: Vec<(SeriesKey, Vec<Point>)> = {
            let state = self.state.read();
            let mut keys = state.index.candidates(selector);
            keys.retain(|k| selector.matches(k));
            keys.sort();
            keys.into_iter()
                .map(|k| {
                    let mut pts = Vec::new();
                    if let Some(s) = state.series.get(&k) {
                        s.collect(t0, t1, &mut pts);
                    }
                    (k, pts)
                })
                .collect()
        };
        Ok(snapshot
            .into_iter()
            .map(|(series, pts)| QueryFrame {
                points: ops::bucketize(&pts, t0, t1, step_ms, agg),
                series,
            })
            .collect())
    }

    pub fn series_summaries(&self) -> Vec<SeriesSummary> {
        let state = self.state.read();
        let mut out: Vec<SeriesSummary> = state
            .series
            .iter()
            .filter_map(|(k, s)| {
                let mut pts = Vec::new();
                s.collect(i64::MIN, i64::MAX, &mut pts);
                Some(SeriesSummary {
                    key: k.clone(),
                    first_ts: pts.first()?.0,
                    last_ts: pts.last()?.0,
                    points: pts.len(),
                })
            })
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    /// Timestamp of the newest point of a series.
    pub fn last_ts(&self, key: &SeriesKey) -> Option<i64> {
        self.state.read().series.get(key).and_then(Series::last_ts)
    }

    pub fn index_snapshot(&self) -> SeriesIndex {
        self.state.read().index.clone()
    }

    /// Index rebuilt from the series table, for consistency checks.
    pub fn rebuilt_index(&self) -> SeriesIndex {
        SeriesIndex::build(self.state.read().series.keys())
    }

    /// Hex SHA-256 over every series and point, in canonical order.
    pub fn digest(&self) -> String {
        let state = self.state.read();
        let mut keys: Vec<&SeriesKey> = state.series.keys().collect();
        keys.sort();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.to_string().as_bytes());
            let mut pts = Vec::new();
            state.series[k].collect(i64::MIN, i64::MAX, &mut pts);
            for (t, v) in pts {
                h.update(t.to_le_bytes());
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn rollup_source(&self, _resolution_ms: i64) -> RollupSource {
        RollupSource::Raw
    }

    /// Purges sealed chunks whose newest point is older than the raw TTL,
    /// folding them into every rollup tier first. Open chunks are never
    /// touched.
    pub fn enforce_retention(
        &self,
        policy: &RetentionPolicy,
        now: i64,
    ) -> Result<PurgeReport, StoreError> {
        policy.validate().map_err(StoreError::InvalidPolicy)?;
        let cutoff = now - policy.raw_ttl_ms;
        let mut report = PurgeReport::default();
        let mut state = self.state.write();
        if state.closed {
            return Err(StoreError::StoreClosed);
        }
        let mut doomed_segments = Vec::new();
        let mut touched_tiers = std::collections::BTreeSet::new();

        for s in state.series.values_mut() {
            let keep_from = s
                .sealed
                .partition_point(|c| c.points[c.points.len() - 1].0 < cutoff);
            if keep_from > 0 {
                let purged: Vec<Arc<Chunk>> = s.sealed.drain(..keep_from).collect();
                let raw: Vec<Point> = purged
                    .iter()
                    .flat_map(|c| c.points.iter().copied())
                    .collect();
                report.purged_chunks += purged.len();
                report.freed_points += raw.len();
                doomed_segments.extend(purged.iter().map(|c| c.seg_id));
                for rule in &policy.downsample_rules {
                    let fresh = ops::downsample(&raw, rule.resolution_ms, rule.aggregator);
                    report.rollup_points_written += fresh.len();
                    merge_rollup(
                        s.rollups.entry(rule.resolution_ms).or_default(),
                        fresh,
                        rule.aggregator,
                    );
                    touched_tiers.insert(rule.resolution_ms);
                }
            }
            for rule in &policy.downsample_rules {
                if let Some(tier) = s.rollups.get_mut(&rule.resolution_ms) {
                    let expired = tier.partition_point(|p| p.0 < now - rule.ttl_ms);
                    if expired > 0 {
                        tier.drain(..expired);
                        report.rollup_points_expired += expired;
                        touched_tiers.insert(rule.resolution_ms);
                    }
                }
            }
        }

        if report.purged_chunks == 0 && touched_tiers.is_empty() {
            return Ok(report);
        }
        for res in &touched_tiers {
            let mut chunks: Vec<SegmentChunk> = state
                .series
                .iter()
                .filter_map(|(k, s)| {
                    let pts = s.rollups.get(res).filter(|p| !p.is_empty())?;
                    Some(SegmentChunk {
                        key: k.to_string(),
                        points: pts.clone(),
                    })
                })
                .collect();
            chunks.sort_by(|a, b| a.key.cmp(&b.key));
            segment::write_file(
                &rollups_dir(&self.dir).join(format!("{res}.seg")),
                &chunks,
                true,
            )?;
        }
        // The log must not resurrect purged points, so shrink it before the
        // segments disappear.
        state.compact_wal()?;
        for id in doomed_segments {
            if let Err(e) = fs::remove_file(segment_path(&self.dir, id)) {
                warn!("failed to remove segment {id}: {e}");
            }
        }
        state.series.retain(|_, s| !s.is_empty());
        state.index = SeriesIndex::build(state.series.keys());
        Ok(report)
    }

    /// Flushes and closes. Further writes fail with `StoreClosed`.
    pub fn close(&self) -> Result<(), StoreError> {
        let mut state = self.state.write();
        if state.closed {
            return Ok(());
        }
        state.compact_wal()?;
        state.wal.sync()?;
        state.closed = true;
        Ok(())
    }
}

fn validate_range(t0: i64, t1: i64, step_ms: i64) -> Result<(), StoreError> {
    if t0 >= t1 {
        return Err(StoreError::InvalidRange(format!(
            "start {t0} must be before end {t1}"
        )));
    }
    if step_ms < MIN_STEP_MS {
        return Err(StoreError::InvalidRange(format!(
            "step {step_ms} below minimum {MIN_STEP_MS}"
        )));
    }
    Ok(())
}

/// Merges freshly downsampled buckets into a tier. A bucket split across two
/// purges is combined with the aggregator (for AVG this weights both halves
/// equally).
fn merge_rollup(tier: &mut Vec<Point>, fresh: Vec<Point>, agg: Aggregator) {
    for (ts, v) in fresh {
        match tier.binary_search_by(|p| p.0.cmp(&ts)) {
            Ok(i) => {
                let old = tier[i].1;
                tier[i].1 = agg.apply(&[old, v]).unwrap_or(v);
            }
            Err(i) => tier.insert(i, (ts, v)),
        }
    }
}

impl State {
    fn apply(
        &mut self,
        dir: &Path,
        config: &StoreConfig,
        key: &SeriesKey,
        ts: i64,
        value: f64,
        strict: bool,
    ) -> Result<(), StoreError> {
        if ts <= 0 || !value.is_finite() {
            return Err(StoreError::InvalidPoint { ts, value });
        }
        let s = self.series.entry(key.clone()).or_default();
        let limit = if strict { s.last_ts() } else { s.sealed_max() };
        if let Some(last) = limit {
            if ts <= last {
                return Err(StoreError::OutOfOrderAppend {
                    series: key.to_string(),
                    ts,
                    last,
                });
            }
        }
        match s.open.last() {
            Some(&(last, _)) if ts <= last => match s.open.binary_search_by(|p| p.0.cmp(&ts)) {
                Ok(i) => s.open[i].1 = value,
                Err(i) => s.open.insert(i, (ts, value)),
            },
            _ => s.open.push((ts, value)),
        }
        if s.open.len() > config.chunk_capacity {
            let rest = s.open.split_off(config.chunk_capacity);
            let points = std::mem::replace(&mut s.open, rest);
            let id = self.next_seg;
            self.next_seg += 1;
            segment::write_file(
                &segment_path(dir, id),
                &[SegmentChunk {
                    key: key.to_string(),
                    points: points.clone(),
                }],
                config.sync_writes,
            )?;
            s.sealed.push(Arc::new(Chunk { seg_id: id, points }));
        }
        Ok(())
    }

    /// Rewrites the log to hold exactly the open chunks.
    fn compact_wal(&mut self) -> io::Result<()> {
        let mut buf = Vec::new();
        let mut keys: Vec<&SeriesKey> = self.series.keys().collect();
        keys.sort();
        for k in keys {
            for &(ts, v) in &self.series[k].open {
                wal::encode_record(&mut buf, k, ts, v);
            }
        }
        self.wal.rewrite(&buf)
    }
}
