//! Deterministic synthetic traffic.

use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::EmulatorError;
use crate::model::{PACKET_LOSS, TCP_RETRANSMITS, THROUGHPUT};

/// Retransmit arrivals are drawn per slot of this length.
pub const ARRIVAL_SLOT_MS: i64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficProfile {
    /// Bytes per second.
    pub throughput_base: f64,
    pub throughput_amplitude: f64,
    pub period_s: f64,
    pub loss_base: f64,
    /// Mean retransmit events per second.
    pub retransmit_rate: f64,
    pub seed: u64,
    /// Uniform noise amplitude as a fraction of the base value.
    pub noise_ratio: f64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        Self {
            throughput_base: 1.25e8,
            throughput_amplitude: 2.5e7,
            period_s: 3600.0,
            loss_base: 0.001,
            retransmit_rate: 2.0,
            seed: 1,
            noise_ratio: 0.02,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.throughput_base >= self.throughput_amplitude && self.throughput_amplitude >= 0.0)
        {
            return Err("need throughput_base >= throughput_amplitude >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.loss_base) {
            return Err("loss_base must be within [0, 1]".into());
        }
        if self.period_s.is_nan() || self.period_s <= 0.0 {
            return Err("period_s must be positive".into());
        }
        if [self.retransmit_rate, self.noise_ratio]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err("retransmit_rate and noise_ratio must not be negative".into());
        }
        Ok(())
    }
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn rng_for(seed: u64, stream: u64, t: i64) -> StdRng {
    StdRng::seed_from_u64(mix(
        mix(seed ^ stream.wrapping_mul(0x1000_0000_01b3)) ^ t as u64
    ))
}

/// Uniform in [-1, 1], a pure function of its arguments.
fn noise(seed: u64, stream: u64, t: i64) -> f64 {
    rng_for(seed, stream, t).gen_range(-1.0..=1.0)
}

fn arrivals(profile: &TrafficProfile, slot: i64) -> u64 {
    if profile.retransmit_rate <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(profile.retransmit_rate).expect("rate is positive");
    poisson.sample(&mut rng_for(profile.seed, 3, slot)) as u64
}

pub fn throughput(profile: &TrafficProfile, t: i64) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (t as f64 / 1000.0) / profile.period_s;
    let n = profile.throughput_base * profile.noise_ratio * noise(profile.seed, 1, t);
    (profile.throughput_base + profile.throughput_amplitude * phase.sin() + n).max(0.0)
}

pub fn loss(profile: &TrafficProfile, t: i64) -> f64 {
    let n = profile.loss_base * profile.noise_ratio * noise(profile.seed, 2, t);
    (profile.loss_base + n).clamp(0.0, 1.0)
}

/// Retransmits counted over whole slots in `[0, t)`.
pub fn retransmits(profile: &TrafficProfile, t: i64) -> u64 {
    (0..t.max(0) / ARRIVAL_SLOT_MS)
        .map(|k| arrivals(profile, k))
        .sum()
}

/// Value of `metric` at `t` ms after the run origin.
pub fn synth_value(profile: &TrafficProfile, metric: &str, t: i64) -> Result<f64, EmulatorError> {
    match metric {
        THROUGHPUT => Ok(throughput(profile, t)),
        PACKET_LOSS => Ok(loss(profile, t)),
        TCP_RETRANSMITS => Ok(retransmits(profile, t) as f64),
        other => Err(EmulatorError::UnknownMetric(other.to_string())),
    }
}

/// [`synth_value`] with the retransmit counter memoized as prefix sums.
#[derive(Debug)]
pub struct Generator {
    profile: TrafficProfile,
    prefix: Mutex<Vec<u64>>,
}

impl Generator {
    pub fn new(profile: TrafficProfile) -> Self {
        Self {
            profile,
            prefix: Mutex::new(vec![0]),
        }
    }

    pub fn profile(&self) -> &TrafficProfile {
        &self.profile
    }

    pub fn throughput(&self, t: i64) -> f64 {
        throughput(&self.profile, t)
    }

    pub fn loss(&self, t: i64) -> f64 {
        loss(&self.profile, t)
    }

    pub fn retransmits(&self, t: i64) -> u64 {
        let slots = (t.max(0) / ARRIVAL_SLOT_MS) as usize;
        let mut prefix = self.prefix.lock();
        while prefix.len() <= slots {
            let k = prefix.len() - 1;
            let next = prefix[k] + arrivals(&self.profile, k as i64);
            prefix.push(next);
        }
        prefix[slots]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_profile_is_constant() {
        let p = TrafficProfile {
            throughput_amplitude: 0.0,
            noise_ratio: 0.0,
            ..TrafficProfile::default()
        };
        for t in [0, 1, 999, 123_456_789] {
            assert_eq!(synth_value(&p, THROUGHPUT, t).unwrap(), p.throughput_base);
        }
    }

    #[test]
    fn deterministic_and_unknown_metric() {
        let p = TrafficProfile::default();
        assert_eq!(
            synth_value(&p, THROUGHPUT, 5000).unwrap(),
            synth_value(&p, THROUGHPUT, 5000).unwrap()
        );
        assert_eq!(
            synth_value(&p, PACKET_LOSS, 5000).unwrap(),
            synth_value(&p, PACKET_LOSS, 5000).unwrap()
        );
        assert!(matches!(
            synth_value(&p, "disk_free", 1),
            Err(EmulatorError::UnknownMetric(_))
        ));
    }

    #[test]
    fn noise_stays_within_ratio() {
        let p = TrafficProfile {
            throughput_amplitude: 0.0,
            ..TrafficProfile::default()
        };
        for t in (0..100_000).step_by(997) {
            let v = throughput(&p, t);
            assert!((v - p.throughput_base).abs() <= p.throughput_base * p.noise_ratio + 1e-6);
            let l = loss(&p, t);
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn memoized_counter_matches_direct_sum() {
        let p = TrafficProfile::default();
        let g = Generator::new(p.clone());
        for t in [0, 999, 1000, 45_500, 3_000, 120_000] {
            assert_eq!(g.retransmits(t), retransmits(&p, t), "t={t}");
        }
    }

    proptest! {
        #[test]
        fn retransmits_monotone(seed: u64, a in 0i64..600_000, b in 0i64..600_000) {
            let p = TrafficProfile { seed, ..TrafficProfile::default() };
            let (t1, t2) = (a.min(b), a.max(b));
            // Oracle: the counter at t2 adds the arrivals of every slot in between.
            let extra: u64 = (t1 / ARRIVAL_SLOT_MS..t2 / ARRIVAL_SLOT_MS).map(|k| arrivals(&p, k)).sum();
            prop_assert_eq!(retransmits(&p, t2), retransmits(&p, t1) + extra);
        }
    }
}
