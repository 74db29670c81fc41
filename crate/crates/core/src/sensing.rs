//! Dual ultrasonic sensors under the bin lid.
//!
//! Each bin carries two identical sensors. Both measure distance to the
//! waste surface; distances are converted to fill fractions and reconciled
//! by [`vote`]. A distance of `None` is a FAULT: the channel produced no
//! usable echo or the echo fell outside the sensor's range.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{clamp_fill, BinGeometry, FillFraction, SensorSpec, Timestamp};
use crate::rng::SeededRng;

/// One channel's distance in centimeters, `None` when faulted.
pub type Reading = Option<f64>;

pub const DEFAULT_AGREE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("distance {distance_cm} cm outside sensor range [{min_cm}, {max_cm}]")]
    OutOfRange { distance_cm: f64, min_cm: f64, max_cm: f64 },
    #[error("fault model invalid: {0}")]
    FaultModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReadingPair {
    pub sensor_a_cm: Reading,
    pub sensor_b_cm: Reading,
    pub measured_at: Timestamp,
}

impl SensorReadingPair {
    pub fn swapped(self) -> Self {
        SensorReadingPair { sensor_a_cm: self.sensor_b_cm, sensor_b_cm: self.sensor_a_cm, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VoteKind {
    Agreed,
    Disagreed,
    Single,
    DualFault,
}

impl VoteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VoteKind::Agreed => "AGREED",
            VoteKind::Disagreed => "DISAGREED",
            VoteKind::Single => "SINGLE",
            VoteKind::DualFault => "DUAL_FAULT",
        }
    }

    pub fn parse(s: &str) -> Option<VoteKind> {
        Some(match s {
            "AGREED" => VoteKind::Agreed,
            "DISAGREED" => VoteKind::Disagreed,
            "SINGLE" => VoteKind::Single,
            "DUAL_FAULT" => VoteKind::DualFault,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub kind: VoteKind,
    /// Absent only for [`VoteKind::DualFault`].
    pub fill: Option<FillFraction>,
    pub fill_a: Option<FillFraction>,
    pub fill_b: Option<FillFraction>,
}

/// Per-channel fault injection. Draws happen in the order dropout, stuck,
/// noise, and a draw is skipped entirely when its parameter is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultModel {
    #[serde(default)]
    pub stuck_prob: f64,
    #[serde(default)]
    pub dropout_prob: f64,
    #[serde(default)]
    pub noise_sigma_cm: f64,
}

impl FaultModel {
    pub fn validate(&self) -> Result<(), SensingError> {
        let prob_ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !prob_ok(self.stuck_prob) {
            return Err(SensingError::FaultModel(format!("stuck_prob {} not in [0,1]", self.stuck_prob)));
        }
        if !prob_ok(self.dropout_prob) {
            return Err(SensingError::FaultModel(format!("dropout_prob {} not in [0,1]", self.dropout_prob)));
        }
        if !self.noise_sigma_cm.is_finite() || self.noise_sigma_cm < 0.0 {
            return Err(SensingError::FaultModel(format!("noise_sigma_cm {} < 0", self.noise_sigma_cm)));
        }
        Ok(())
    }
}

/// Converts a measured distance to a fill fraction, linear between the bin
/// floor (empty) and the sensor's minimum range (full).
pub fn distance_to_fill(
    distance_cm: f64,
    geometry: &BinGeometry,
    spec: &SensorSpec,
) -> Result<FillFraction, SensingError> {
    if !spec.in_range(distance_cm) {
        return Err(SensingError::OutOfRange {
            distance_cm,
            min_cm: spec.min_range_cm,
            max_cm: spec.max_range_cm,
        });
    }
    let span = geometry.depth_cm - spec.min_range_cm;
    clamp_fill((geometry.depth_cm - distance_cm) / span).map_err(|_| SensingError::OutOfRange {
        distance_cm,
        min_cm: spec.min_range_cm,
        max_cm: spec.max_range_cm,
    })
}

/// Inverse of [`distance_to_fill`] for a true fill, used to drive the
/// simulated sensors.
pub fn fill_to_distance(fill: f64, geometry: &BinGeometry, spec: &SensorSpec) -> f64 {
    let fill = fill.clamp(0.0, 1.0);
    geometry.depth_cm - fill * (geometry.depth_cm - spec.min_range_cm)
}

/// The two sensor channels of one bin. Holds the last emitted value of each
/// channel, which a stuck sensor repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorChannels {
    last: [Option<Reading>; 2],
}

impl SensorChannels {
    pub fn new() -> Self {
        SensorChannels::default()
    }

    pub fn measure(
        &mut self,
        true_distance_cm: f64,
        fault: &FaultModel,
        spec: &SensorSpec,
        rng: &mut SeededRng,
        at: Timestamp,
    ) -> SensorReadingPair {
        let a = self.channel(0, true_distance_cm, fault, spec, rng);
        let b = self.channel(1, true_distance_cm, fault, spec, rng);
        SensorReadingPair { sensor_a_cm: a, sensor_b_cm: b, measured_at: at }
    }

    fn channel(
        &mut self,
        idx: usize,
        true_distance_cm: f64,
        fault: &FaultModel,
        spec: &SensorSpec,
        rng: &mut SeededRng,
    ) -> Reading {
        let reading = if fault.dropout_prob > 0.0 && rng.unit() < fault.dropout_prob {
            None
        } else if fault.stuck_prob > 0.0 && rng.unit() < fault.stuck_prob {
            // first stuck reading repeats the true initial distance
            self.last[idx].unwrap_or(Some(true_distance_cm))
        } else {
            let noise = if fault.noise_sigma_cm > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                z * fault.noise_sigma_cm
            } else {
                0.0
            };
            Some(true_distance_cm + noise)
        };
        let reading = reading.filter(|d| spec.in_range(*d));
        self.last[idx] = Some(reading);
        reading
    }
}

/// Stateless single-shot measurement: both channels with no stuck history.
pub fn measure(
    true_distance_cm: f64,
    fault: &FaultModel,
    spec: &SensorSpec,
    rng: &mut SeededRng,
    at: Timestamp,
) -> SensorReadingPair {
    SensorChannels::new().measure(true_distance_cm, fault, spec, rng, at)
}

/// Reconciles the two channels.
///
/// Both healthy and within `agree_tol`: AGREED with the mean. Both healthy
/// and apart: DISAGREED with the larger fill, so a possibly-full bin is
/// treated as full and flagged for inspection. One healthy: SINGLE.
pub fn vote(
    pair: &SensorReadingPair,
    geometry: &BinGeometry,
    spec: &SensorSpec,
    agree_tol: f64,
) -> VoteOutcome {
    let to_fill = |r: Reading| r.and_then(|d| distance_to_fill(d, geometry, spec).ok());
    let fill_a = to_fill(pair.sensor_a_cm);
    let fill_b = to_fill(pair.sensor_b_cm);
    vote_fills(fill_a, fill_b, agree_tol)
}

pub fn vote_fills(fill_a: Option<FillFraction>, fill_b: Option<FillFraction>, agree_tol: f64) -> VoteOutcome {
    let (kind, fill) = match (fill_a, fill_b) {
        (Some(a), Some(b)) => {
            let (x, y) = (a.value(), b.value());
            if (x - y).abs() <= agree_tol {
                // mean of two values in [0,1] stays in [0,1]
                let mean = clamp_fill(x / 2.0 + y / 2.0).expect("finite");
                (VoteKind::Agreed, Some(mean))
            } else {
                (VoteKind::Disagreed, Some(if x >= y { a } else { b }))
            }
        }
        (Some(a), None) => (VoteKind::Single, Some(a)),
        (None, Some(b)) => (VoteKind::Single, Some(b)),
        (None, None) => (VoteKind::DualFault, None),
    };
    VoteOutcome { kind, fill, fill_a, fill_b }
}
