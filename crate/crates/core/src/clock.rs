//! Time sources. Every component reads "now" through a [`Clock`] so tests and
//! the emulator can run on simulated time.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch, UTC.
    fn now_ms(&self) -> i64;

    /// Wall-clock duration that corresponds to `sim_ms` of this clock's time.
    fn wall_duration(&self, sim_ms: i64) -> Duration {
        Duration::from_millis(sim_ms.max(0) as u64)
    }
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicI64,
}

impl ManualClock {
    pub fn new(start_ms: i64) -> Self {
        Self {
            now: AtomicI64::new(start_ms),
        }
    }

    pub fn set(&self, ms: i64) {
        self.now.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) -> i64 {
        self.now.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.now.load(Ordering::SeqCst)
    }

    fn wall_duration(&self, _sim_ms: i64) -> Duration {
        Duration::from_millis(1)
    }
}

/// Simulated time running `factor` times faster than the wall clock.
#[derive(Debug)]
pub struct CompressedClock {
    origin_ms: i64,
    started: Instant,
    factor: f64,
}

impl CompressedClock {
    pub fn new(origin_ms: i64, factor: f64) -> Self {
        assert!(factor > 0.0, "compression factor must be positive");
        Self {
            origin_ms,
            started: Instant::now(),
            factor,
        }
    }
}

impl Clock for CompressedClock {
    fn now_ms(&self) -> i64 {
        let elapsed = self.started.elapsed().as_secs_f64() * 1000.0 * self.factor;
        self.origin_ms + elapsed as i64
    }

    fn wall_duration(&self, sim_ms: i64) -> Duration {
        Duration::from_secs_f64(sim_ms.max(0) as f64 / 1000.0 / self.factor)
    }
}
