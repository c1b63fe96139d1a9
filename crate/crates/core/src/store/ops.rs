//! Pure point-series operations: bucketing, counter rate and downsampling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type Point = (i64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Avg,
    Min,
    Max,
    Last,
    Sum,
    /// Per-second counter rate, averaged per bucket. Query-only.
    Rate,
}

impl Aggregator {
    pub const ALL: [Aggregator; 6] = [
        Aggregator::Avg,
        Aggregator::Min,
        Aggregator::Max,
        Aggregator::Last,
        Aggregator::Sum,
        Aggregator::Rate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Avg => "avg",
            Aggregator::Min => "min",
            Aggregator::Max => "max",
            Aggregator::Last => "last",
            Aggregator::Sum => "sum",
            Aggregator::Rate => "rate",
        }
    }

    /// Folds the values of one bucket. `values` are in timestamp order.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            Aggregator::Avg | Aggregator::Rate => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregator::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Last => *values.last().unwrap(),
            Aggregator::Sum => values.iter().sum(),
        })
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Aggregator::ALL
            .into_iter()
            .find(|a| a.as_str() == lower)
            .ok_or_else(|| format!("unknown aggregator `{s}`"))
    }
}

/// Converts cumulative counter points into per-second rates. A drop in value
/// is a reset: the new value is taken as the increase since the reset.
pub fn rate(points: &[Point]) -> Vec<Point> {
    points
        .windows(2)
        .filter_map(|w| {
            let ((t1, v1), (t2, v2)) = (w[0], w[1]);
            let dt = (t2 - t1) as f64 / 1000.0;
            if dt <= 0.0 {
                return None;
            }
            let delta = if v2 >= v1 { v2 - v1 } else { v2 };
            Some((t2, delta / dt))
        })
        .collect()
}

/// Aggregates sorted points into `[k*res, (k+1)*res)` buckets; empty buckets
/// are omitted and each output point is stamped with its bucket start.
pub fn downsample(points: &[Point], resolution_ms: i64, agg: Aggregator) -> Vec<Point> {
    assert!(resolution_ms > 0, "resolution must be positive");
    let mut out = Vec::new();
    let mut values = Vec::new();
    let mut current: Option<i64> = None;
    for &(ts, v) in points {
        let bucket = ts.div_euclid(resolution_ms) * resolution_ms;
        if current != Some(bucket) {
            if let Some(start) = current {
                out.extend(agg.apply(&values).map(|x| (start, x)));
            }
            values.clear();
            current = Some(bucket);
        }
        values.push(v);
    }
    if let Some(start) = current {
        out.extend(agg.apply(&values).map(|x| (start, x)));
    }
    out
}

/// Buckets points in `[t0, t1)` into `[t0 + k*step, t0 + (k+1)*step)` for every
/// bucket start below `t1`. Empty buckets carry `None`.
pub fn bucketize(
    points: &[Point],
    t0: i64,
    t1: i64,
    step_ms: i64,
    agg: Aggregator,
) -> Vec<(i64, Option<f64>)> {
    let source;
    let points = if agg == Aggregator::Rate {
        source = rate(points);
        &source[..]
    } else {
        points
    };
    let n = ((t1 - t0) + step_ms - 1) / step_ms;
    let mut grouped: Vec<Vec<f64>> = vec![Vec::new(); n.max(0) as usize];
    for &(ts, v) in points {
        if ts < t0 || ts >= t1 {
            continue;
        }
        grouped[((ts - t0) / step_ms) as usize].push(v);
    }
    grouped
        .iter()
        .enumerate()
        .map(|(k, vals)| (t0 + k as i64 * step_ms, agg.apply(vals)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bucket_avg() {
        let pts = [(0, 1.0), (1000, 2.0), (2000, 3.0), (3000, 4.0)];
        let out = bucketize(&pts, 0, 4000, 2000, Aggregator::Avg);
        assert_eq!(out, vec![(0, Some(1.5)), (2000, Some(3.5))]);
    }

    #[test]
    fn bucket_null_gaps() {
        let pts = [(0, 1.0), (5000, 2.0)];
        let out = bucketize(&pts, 0, 6000, 2000, Aggregator::Max);
        assert_eq!(out, vec![(0, Some(1.0)), (2000, None), (4000, Some(2.0))]);
    }

    #[test]
    fn rate_cases() {
        assert_eq!(rate(&[(0, 100.0), (10_000, 200.0)]), vec![(10_000, 10.0)]);
        assert_eq!(rate(&[(0, 100.0), (10_000, 50.0)]), vec![(10_000, 5.0)]);
        assert!(rate(&[(0, 1.0)]).is_empty());
        assert!(rate(&[]).is_empty());
    }

    #[test]
    fn downsample_cases() {
        let pts = [(0, 1.0), (1000, 2.0), (2000, 3.0), (3000, 4.0)];
        assert_eq!(
            downsample(&pts, 2000, Aggregator::Avg),
            vec![(0, 1.5), (2000, 3.5)]
        );
        assert!(downsample(&[], 1000, Aggregator::Avg).is_empty());
        assert_eq!(
            downsample(&[(100, 1.0), (5100, 2.0)], 1000, Aggregator::Last),
            vec![(0, 1.0), (5000, 2.0)]
        );
    }

    #[test]
    fn aggregator_parse() {
        assert_eq!("AVG".parse::<Aggregator>(), Ok(Aggregator::Avg));
        assert!("median".parse::<Aggregator>().is_err());
    }

    fn brute_min(points: &[Point], res: i64) -> Vec<Point> {
        let mut map = std::collections::BTreeMap::<i64, f64>::new();
        for &(t, v) in points {
            let b = t - t.rem_euclid(res);
            let e = map.entry(b).or_insert(f64::INFINITY);
            if v < *e {
                *e = v;
            }
        }
        map.into_iter().collect()
    }

    #[test]
    fn downsample_min_matches_brute_force_on_10k_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut t = 1;
        let pts: Vec<Point> = (0..10_000)
            .map(|_| {
                t += rng.gen_range(1..3000);
                (t, rng.gen_range(-1e3..1e3))
            })
            .collect();
        assert_eq!(
            downsample(&pts, 5000, Aggregator::Min),
            brute_min(&pts, 5000)
        );
    }

    proptest! {
        #[test]
        fn rate_is_never_negative(vals in proptest::collection::vec(0.0f64..1e6, 0..50)) {
            let pts: Vec<Point> = vals.iter().enumerate().map(|(i, v)| (i as i64 * 1000 + 1, *v)).collect();
            prop_assert!(rate(&pts).iter().all(|(_, r)| *r >= 0.0));
        }
    }
}
