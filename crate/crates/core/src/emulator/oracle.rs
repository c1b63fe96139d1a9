use super::{FaultKind, TopologyConfig};
use crate::model::SeriesKey;

/// Legal outcomes for one query bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketExpectation {
    /// No scrape can have produced a point in the bucket.
    Null,
    /// At least one successful scrape must have landed in the bucket.
    NonNull,
    /// Depends on scrape phase.
    Either,
}

/// Scrape cadence the oracle assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cadence {
    pub interval_ms: i64,
    pub jitter_ms: i64,
}

impl Cadence {
    /// Longest gap between two consecutive scrape attempts.
    fn max_gap(&self) -> i64 {
        self.interval_ms + self.jitter_ms
    }

    /// How far before a scrape its samples may be stamped. Second-resolution
    /// sources round the window out to a whole second.
    fn lookback(&self) -> i64 {
        self.max_gap() + 1000
    }
}

fn merge(mut v: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    v.sort();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn covered(set: &[(i64, i64)], lo: i64, hi: i64) -> bool {
    let mut at = lo;
    for &(s, e) in set {
        if s > at {
            break;
        }
        if e > at {
            at = e;
        }
        if at >= hi {
            return true;
        }
    }
    at >= hi
}

fn longest_free(set: &[(i64, i64)], lo: i64, hi: i64) -> i64 {
    let mut best = 0;
    let mut at = lo;
    for &(s, e) in set {
        if e <= at {
            continue;
        }
        if s >= hi {
            break;
        }
        best = best.max(s.max(at) - at);
        at = at.max(e);
    }
    best.max(hi - at)
}

/// Expectation for every bucket `[t0 + k*step, ...)` of `series` given the
/// node's fault schedule, the run origin and the scrape cadence.
pub fn downtime_oracle(
    config: &TopologyConfig,
    origin_ms: i64,
    series: &SeriesKey,
    t0: i64,
    t1: i64,
    step_ms: i64,
    cadence: Cadence,
) -> Vec<(i64, BucketExpectation)> {
    let step = step_ms.max(1);
    let starts = (0..).map(|k| t0 + k * step).take_while(|b| *b < t1);
    let Some(node) = config.node(series.node()) else {
        return starts.map(|b| (b, BucketExpectation::Null)).collect();
    };
    let abs = |kinds: &[FaultKind]| {
        merge(
            node.faults
                .iter()
                .filter(|f| kinds.contains(&f.kind))
                .map(|f| (f.start_ms + origin_ms, f.end_ms + origin_ms))
                .collect(),
        )
    };
    let failing = abs(&[FaultKind::Down, FaultKind::Slow, FaultKind::Garbage]);
    let down = abs(&[FaultKind::Down]);
    let lookback = cadence.lookback();

    // Instants no sample can carry: before the origin, while the node is
    // down, or when every scrape that could report them fails.
    let mut undeliverable = vec![(i64::MIN, origin_ms)];
    undeliverable.extend(down.iter().copied());
    undeliverable.extend(
        failing
            .iter()
            .filter(|(s, e)| e - lookback > *s)
            .map(|(s, e)| (*s, e - lookback)),
    );
    let undeliverable = merge(undeliverable);

    let mut blocked = failing.clone();
    blocked.push((i64::MIN, origin_ms));
    let blocked = merge(blocked);

    starts
        .map(|b| {
            let end = b + step;
            let exp = if covered(&undeliverable, b, end) {
                BucketExpectation::Null
            } else if longest_free(&blocked, b, end) >= cadence.max_gap() + 1000 {
                BucketExpectation::NonNull
            } else {
                BucketExpectation::Either
            };
            (b, exp)
        })
        .collect()
}
