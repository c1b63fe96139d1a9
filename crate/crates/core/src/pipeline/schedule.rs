use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    interval_ms: i64,
    /// Nominal slot; the run is due at `slot + offset`.
    slot: i64,
    offset: i64,
}

/// Next due time per collector. Each slot carries a random offset in
/// `[0, jitter_ms]` so collectors sharing an interval spread out.
#[derive(Debug, Clone)]
pub struct ScrapePlan {
    entries: BTreeMap<String, Entry>,
    jitter_ms: i64,
    rng: StdRng,
}

impl ScrapePlan {
    pub fn new(jitter_ms: i64, seed: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            jitter_ms: jitter_ms.max(0),
            rng: StdRng::seed_from_u64(seed),
        }
    }

    pub fn jitter_ms(&self) -> i64 {
        self.jitter_ms
    }

    /// Schedules `id` with its first run due at `first_due` (no jitter).
    pub fn insert(&mut self, id: &str, interval_ms: i64, first_due: i64) {
        self.entries.insert(
            id.to_string(),
            Entry {
                interval_ms: interval_ms.max(1),
                slot: first_due,
                offset: 0,
            },
        );
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.entries.remove(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_due(&self, id: &str) -> Option<i64> {
        self.entries.get(id).map(|e| e.slot + e.offset)
    }

    pub fn entries(&self) -> Vec<(String, i64)> {
        self.entries
            .iter()
            .map(|(id, e)| (id.clone(), e.slot + e.offset))
            .collect()
    }

    pub fn earliest_due(&self) -> Option<i64> {
        self.entries.values().map(|e| e.slot + e.offset).min()
    }

    /// Returns every id due at `now` and moves each to its first slot after
    /// `now`. Missed slots are not replayed.
    pub fn tick(&mut self, now: i64) -> Vec<String> {
        let mut due = Vec::new();
        for (id, e) in self.entries.iter_mut() {
            if e.slot + e.offset > now {
                continue;
            }
            due.push(id.clone());
            // Lateness is measured from the jittered due time.
            let late = (now - e.slot - e.offset).max(0);
            e.slot += (late / e.interval_ms + 1) * e.interval_ms;
            e.offset = if self.jitter_ms > 0 {
                self.rng.gen_range(0..=self.jitter_ms)
            } else {
                0
            };
        }
        due
    }
}

pub fn schedule_tick(plan: &mut ScrapePlan, now: i64) -> Vec<String> {
    plan.tick(now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn due_entries_only() {
        let mut p = ScrapePlan::new(0, 1);
        p.insert("A", 1000, 100);
        p.insert("B", 1000, 200);
        assert_eq!(schedule_tick(&mut p, 50), Vec::<String>::new());
        assert_eq!(schedule_tick(&mut p, 150), vec!["A".to_string()]);
        assert_eq!(p.next_due("A"), Some(1100));
        assert_eq!(p.next_due("B"), Some(200));
    }

    #[test]
    fn missed_intervals_collapse() {
        let mut p = ScrapePlan::new(0, 1);
        p.insert("A", 1000, 0);
        assert_eq!(p.tick(10_500).len(), 1);
        assert_eq!(p.next_due("A"), Some(11_000));
        assert!(p.tick(10_999).is_empty());
    }

    #[test]
    fn jitter_bounded() {
        let mut p = ScrapePlan::new(500, 7);
        p.insert("A", 1000, 0);
        for k in 0..200 {
            let now = p.next_due("A").unwrap();
            assert_eq!(p.tick(now), vec!["A".to_string()], "iteration {k}");
            let next = p.next_due("A").unwrap();
            let slot = next - next.rem_euclid(1000);
            assert!(next - slot <= 500 && next > now);
        }
    }

    proptest! {
        /// Fixed-period polling keeps up whenever the poll period plus jitter fits in one interval.
        #[test]
        fn liveness(interval in 100i64..5000, jitter_frac in 0.0f64..0.5, step_frac in 0.001f64..0.5, total in 1000i64..100_000, seed: u64) {
            let jitter = (interval as f64 * jitter_frac) as i64;
            let step = ((interval as f64 * step_frac) as i64).max(1);
            let mut p = ScrapePlan::new(jitter, seed);
            p.insert("A", interval, 0);
            let mut runs = 0i64;
            let mut now = 0;
            while now < total {
                runs += p.tick(now).len() as i64;
                now += step;
            }
            let expected = total / interval;
            prop_assert!((runs - expected).abs() <= 1, "runs {} expected {}", runs, expected);
        }

        /// Waking exactly at the earliest due time never loses a slot.
        #[test]
        fn due_driven_liveness(intervals in proptest::collection::vec(100i64..5000, 1..6), jitter in 0i64..100, total in 1000i64..100_000, seed: u64) {
            let mut p = ScrapePlan::new(jitter, seed);
            for (i, iv) in intervals.iter().enumerate() {
                p.insert(&format!("c{i}"), *iv, 0);
            }
            let mut runs: BTreeMap<String, i64> = BTreeMap::new();
            while let Some(now) = p.earliest_due().filter(|t| *t < total) {
                for id in p.tick(now) {
                    *runs.entry(id).or_default() += 1;
                }
            }
            for (i, iv) in intervals.iter().enumerate() {
                let got = runs.get(&format!("c{i}")).copied().unwrap_or(0);
                let expected = (total + iv - 1) / iv;
                prop_assert!((got - expected).abs() <= 1, "c{} runs {} expected {}", i, got, expected);
            }
        }
    }
}
