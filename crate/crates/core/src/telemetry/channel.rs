//! A GSM-like link: high and variable latency, occasional loss and
//! duplication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Timestamp;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("channel parameters invalid: {0}")]
pub struct ChannelParamsError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub base_latency_ms: u64,
    pub latency_jitter_ms: u64,
    pub loss_prob: f64,
    pub duplicate_prob: f64,
    pub reorder: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            base_latency_ms: 800,
            latency_jitter_ms: 1_200,
            loss_prob: 0.02,
            duplicate_prob: 0.01,
            reorder: false,
        }
    }
}

impl ChannelParams {
    /// Zero latency, no loss, no duplication.
    pub fn perfect() -> Self {
        ChannelParams { base_latency_ms: 0, latency_jitter_ms: 0, loss_prob: 0.0, duplicate_prob: 0.0, reorder: false }
    }

    pub fn validate(&self) -> Result<(), ChannelParamsError> {
        for (name, p) in [("loss_prob", self.loss_prob), ("duplicate_prob", self.duplicate_prob)] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(ChannelParamsError(format!("{name} {p} not in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Channel state: the last scheduled delivery per stream key, used to keep
/// per-key ordering when `reorder` is off.
#[derive(Debug, Clone)]
pub struct Channel {
    params: ChannelParams,
    last_delivery: BTreeMap<String, Timestamp>,
}

impl Channel {
    pub fn new(params: ChannelParams) -> Self {
        Channel { params, last_delivery: BTreeMap::new() }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Schedules zero, one or two deliveries of `msg`.
    ///
    /// Draw order is fixed: loss, latency, duplicate, then the duplicate's
    /// latency if one is produced. A lost message consumes only the loss
    /// draw.
    pub fn transmit<T: Clone>(&mut self, key: &str, msg: T, now: Timestamp, rng: &mut SeededRng) -> Vec<(Timestamp, T)> {
        if rng.unit() < self.params.loss_prob {
            return Vec::new();
        }
        let first = self.deliver_at(key, now, rng);
        let mut out = vec![(first, msg.clone())];
        if rng.unit() < self.params.duplicate_prob {
            let second = self.deliver_at(key, now, rng);
            out.push((second, msg));
        }
        out
    }

    fn deliver_at(&mut self, key: &str, now: Timestamp, rng: &mut SeededRng) -> Timestamp {
        let jitter = (rng.unit() * self.params.latency_jitter_ms as f64).round() as u64;
        let mut at = now + self.params.base_latency_ms + jitter;
        if !self.params.reorder {
            if let Some(&prev) = self.last_delivery.get(key) {
                at = at.max(prev);
            }
            self.last_delivery.insert(key.to_owned(), at);
        }
        at
    }
}

/// One-shot form of [`Channel::transmit`] for a channel with no history.
pub fn channel_transmit<T: Clone>(msg: T, params: &ChannelParams, rng: &mut SeededRng, now: Timestamp) -> Vec<(Timestamp, T)> {
    Channel::new(*params).transmit("", msg, now, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_channel_delivers_once() {
        let p = ChannelParams { base_latency_ms: 500, latency_jitter_ms: 0, loss_prob: 0.0, duplicate_prob: 0.0, reorder: false };
        let mut rng = SeededRng::new(0);
        let out = channel_transmit("x", &p, &mut rng, Timestamp(1_000));
        assert_eq!(out, vec![(Timestamp(1_500), "x")]);
    }

    #[test]
    fn total_loss() {
        let p = ChannelParams { loss_prob: 1.0, ..Default::default() };
        let mut rng = SeededRng::new(0);
        for _ in 0..100 {
            assert!(channel_transmit(1u8, &p, &mut rng, Timestamp(0)).is_empty());
        }
    }

    #[test]
    fn certain_duplication_gives_two_copies() {
        let p = ChannelParams { loss_prob: 0.0, duplicate_prob: 1.0, ..Default::default() };
        let mut rng = SeededRng::new(0);
        let out = channel_transmit("m", &p, &mut rng, Timestamp(0));
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|(t, m)| *m == "m" && t.0 >= 800 && t.0 <= 2_000));
    }

    #[test]
    fn no_reorder_keeps_send_order_per_key() {
        let p = ChannelParams { base_latency_ms: 10, latency_jitter_ms: 5_000, loss_prob: 0.0, duplicate_prob: 0.3, reorder: false };
        let mut ch = Channel::new(p);
        let mut rng = SeededRng::new(4);
        let mut deliveries = Vec::new();
        for i in 0..500u64 {
            for (at, m) in ch.transmit("bin", i, Timestamp(i * 100), &mut rng) {
                deliveries.push((at, m));
            }
        }
        // scheduling order is send order; times must be non-decreasing along it
        assert!(deliveries.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn reorder_allows_overtaking() {
        let p = ChannelParams { base_latency_ms: 0, latency_jitter_ms: 10_000, loss_prob: 0.0, duplicate_prob: 0.0, reorder: true };
        let mut ch = Channel::new(p);
        let mut rng = SeededRng::new(4);
        let times: Vec<Timestamp> = (0..200u64).map(|i| ch.transmit("k", i, Timestamp(i), &mut rng)[0].0).collect();
        assert!(times.windows(2).any(|w| w[0] > w[1]));
    }

    #[test]
    fn validation() {
        assert!(ChannelParams { loss_prob: 1.1, ..Default::default() }.validate().is_err());
        assert!(ChannelParams { duplicate_prob: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(ChannelParams::default().validate().is_ok());
    }
}
