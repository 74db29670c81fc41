//! Waste arrivals: a Poisson process of deposits with lognormal volumes.

use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Timestamp, MS_PER_DAY};
use crate::rng::SeededRng;

/// Lognormal deposit volume in liters: `ln V ~ Normal(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeDist {
    pub mu: f64,
    pub sigma: f64,
}

impl VolumeDist {
    pub fn validate(&self) -> Result<(), String> {
        if !self.mu.is_finite() {
            return Err(format!("volume.mu {} must be finite", self.mu));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(format!("volume.sigma {} must be >= 0", self.sigma));
        }
        Ok(())
    }
}

/// Arrival stream for one bin. Each arrival draws the exponential gap first,
/// then the volume; the volume is not drawn for a gap that lands past `end`.
#[derive(Debug, Clone)]
pub struct DepositProcess {
    gap: Option<Exp<f64>>,
    volume: LogNormal<f64>,
    capacity_l: f64,
    /// Offset from `start` in fractional milliseconds.
    elapsed_ms: f64,
    start: Timestamp,
    end: Timestamp,
}

impl DepositProcess {
    pub fn new(rate_per_day: f64, dist: VolumeDist, capacity_l: f64, start: Timestamp, end: Timestamp) -> Self {
        let rate_per_ms = rate_per_day / MS_PER_DAY as f64;
        let gap = (rate_per_ms > 0.0).then(|| Exp::new(rate_per_ms).expect("positive rate"));
        let volume = LogNormal::new(dist.mu, dist.sigma).expect("validated volume distribution");
        DepositProcess { gap, volume, capacity_l, elapsed_ms: 0.0, start, end }
    }

    /// Next `(time, volume)` or `None` once the horizon is passed.
    pub fn next(&mut self, rng: &mut SeededRng) -> Option<(Timestamp, f64)> {
        let gap = self.gap.as_ref()?;
        self.elapsed_ms += gap.sample(rng);
        let at = self.start.epoch_ms() as f64 + self.elapsed_ms;
        if at >= self.end.epoch_ms() as f64 {
            self.gap = None;
            return None;
        }
        let v = self.volume.sample(rng).min(self.capacity_l);
        Some((Timestamp(at.floor() as u64), v))
    }
}

/// Every deposit between `start` and `end`.
pub fn deposit_process(
    rate_per_day: f64,
    dist: VolumeDist,
    capacity_l: f64,
    start: Timestamp,
    end: Timestamp,
    rng: &mut SeededRng,
) -> Vec<(Timestamp, f64)> {
    let mut p = DepositProcess::new(rate_per_day, dist, capacity_l, start, end);
    std::iter::from_fn(|| p.next(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_produces_nothing() {
        let mut rng = SeededRng::new(1);
        let d = VolumeDist { mu: 1.0, sigma: 0.5 };
        assert!(deposit_process(0.0, d, 100.0, Timestamp(0), Timestamp(7 * MS_PER_DAY), &mut rng).is_empty());
    }

    #[test]
    fn volumes_are_positive_and_truncated() {
        let mut rng = SeededRng::new(2);
        // median e^5 = 148 L against a 100 L bin: most draws truncate
        let d = VolumeDist { mu: 5.0, sigma: 1.0 };
        let out = deposit_process(200.0, d, 100.0, Timestamp(0), Timestamp(MS_PER_DAY), &mut rng);
        assert!(!out.is_empty());
        assert!(out.iter().all(|&(_, v)| v > 0.0 && v <= 100.0));
        assert!(out.iter().any(|&(_, v)| v == 100.0));
        assert!(out.windows(2).all(|w| w[0].0 <= w[1].0));
    }
}
