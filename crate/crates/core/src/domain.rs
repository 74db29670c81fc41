//! Value types shared by every subsystem: fill fractions, timestamps and
//! the physical description of a bin and its ultrasonic sensors.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("value is not finite: {0}")]
    NonFinite(f64),
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("fill fraction {0} outside [0, 1]")]
    Fill(f64),
    #[error("sensor range invalid: min {min_cm} cm, max {max_cm} cm")]
    SensorRange { min_cm: f64, max_cm: f64 },
    #[error("bin depth {depth_cm} cm must exceed sensor minimum range {min_cm} cm")]
    BinDepth { depth_cm: f64, min_cm: f64 },
    #[error("bin capacity must be positive, got {0} L")]
    Capacity(f64),
}

/// Waste level as a fraction of bin depth, always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct FillFraction(f64);

impl FillFraction {
    pub const EMPTY: FillFraction = FillFraction(0.0);
    pub const FULL: FillFraction = FillFraction(1.0);

    /// Rejects values outside `[0, 1]` instead of clamping.
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NonFinite(value));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(DomainError::Fill(value));
        }
        Ok(FillFraction(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for FillFraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        FillFraction::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for FillFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

/// Clamps a finite real into a fill fraction.
pub fn clamp_fill(raw: f64) -> Result<FillFraction, DomainError> {
    if !raw.is_finite() {
        return Err(DomainError::NonFinite(raw));
    }
    Ok(FillFraction(raw.clamp(0.0, 1.0)))
}

/// Milliseconds since the Unix epoch, UTC.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const fn from_millis(epoch_ms: u64) -> Self {
        Timestamp(epoch_ms)
    }

    pub fn epoch_ms(self) -> u64 {
        self.0
    }

    pub fn now() -> Self {
        let ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp(ms)
    }

    pub fn saturating_sub(self, other: Timestamp) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;

    fn add(self, ms: u64) -> Timestamp {
        Timestamp(self.0 + ms)
    }
}

impl Sub for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 as i64 - rhs.0 as i64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

pub const MS_PER_HOUR: u64 = 3_600_000;
pub const MS_PER_DAY: u64 = 24 * MS_PER_HOUR;

/// Ultrasonic ranging limits. The defaults match an HC-SR04 class module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SensorSpecRaw")]
pub struct SensorSpec {
    pub min_range_cm: f64,
    pub max_range_cm: f64,
    pub mount_offset_cm: f64,
}

#[derive(Deserialize)]
struct SensorSpecRaw {
    #[serde(default = "default_min_range")]
    min_range_cm: f64,
    #[serde(default = "default_max_range")]
    max_range_cm: f64,
    #[serde(default)]
    mount_offset_cm: f64,
}

fn default_min_range() -> f64 {
    2.0
}

fn default_max_range() -> f64 {
    400.0
}

impl TryFrom<SensorSpecRaw> for SensorSpec {
    type Error = DomainError;

    fn try_from(raw: SensorSpecRaw) -> Result<Self, DomainError> {
        SensorSpec::new(raw.min_range_cm, raw.max_range_cm, raw.mount_offset_cm)
    }
}

impl SensorSpec {
    pub fn new(min_range_cm: f64, max_range_cm: f64, mount_offset_cm: f64) -> Result<Self, DomainError> {
        if !(min_range_cm.is_finite() && max_range_cm.is_finite() && mount_offset_cm.is_finite())
            || min_range_cm <= 0.0
            || min_range_cm >= max_range_cm
        {
            return Err(DomainError::SensorRange { min_cm: min_range_cm, max_cm: max_range_cm });
        }
        Ok(SensorSpec { min_range_cm, max_range_cm, mount_offset_cm })
    }

    pub fn in_range(&self, distance_cm: f64) -> bool {
        distance_cm.is_finite() && distance_cm >= self.min_range_cm && distance_cm <= self.max_range_cm
    }
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec { min_range_cm: 2.0, max_range_cm: 400.0, mount_offset_cm: 0.0 }
    }
}

/// Interior shape of a bin. `depth_cm` is measured from the sensor face to
/// the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGeometry {
    pub depth_cm: f64,
    pub capacity_l: f64,
}

impl BinGeometry {
    pub fn new(depth_cm: f64, capacity_l: f64, spec: &SensorSpec) -> Result<Self, DomainError> {
        let g = BinGeometry { depth_cm, capacity_l };
        g.validate(spec)?;
        Ok(g)
    }

    pub fn validate(&self, spec: &SensorSpec) -> Result<(), DomainError> {
        if !self.depth_cm.is_finite() || self.depth_cm <= spec.min_range_cm {
            return Err(DomainError::BinDepth { depth_cm: self.depth_cm, min_cm: spec.min_range_cm });
        }
        if !self.capacity_l.is_finite() || self.capacity_l <= 0.0 {
            return Err(DomainError::Capacity(self.capacity_l));
        }
        Ok(())
    }
}
