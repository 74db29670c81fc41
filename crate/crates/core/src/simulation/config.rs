use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{BinGeometry, SensorSpec, MS_PER_DAY};
use crate::geo::GeoCoordinate;
use crate::monitoring::{MonitoringPolicy, TruckInfo, Zone};
use crate::sensing::{FaultModel, DEFAULT_AGREE_TOL};
use crate::telemetry::{ChannelParams, RetransmitPolicy};

use super::battery::BatteryParams;
use super::deposit::VolumeDist;

/// 2024-01-01T00:00:00Z
pub const DEFAULT_START_MS: u64 = 1_704_067_200_000;
pub const DEFAULT_REPORTING_PERIOD_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON for a scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config invalid:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> Vec<String> {
        match self {
            ConfigError::Parse(e) => vec![e.to_string()],
            ConfigError::Invalid(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub id: String,
    pub position: GeoCoordinate,
    pub geometry: BinGeometry,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub fault: FaultModel,
    /// Mean deposits per day.
    pub arrival_rate_per_day: f64,
    pub volume: VolumeDist,
    #[serde(default = "default_reporting_period")]
    pub reporting_period_ms: u64,
    #[serde(default)]
    pub initial_volume_l: f64,
    #[serde(default = "default_battery")]
    pub initial_battery_v: f64,
}

fn default_reporting_period() -> u64 {
    DEFAULT_REPORTING_PERIOD_MS
}

fn default_battery() -> f64 {
    9.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckConfig {
    pub id: String,
    pub capacity_l: f64,
    pub speed_kmh: f64,
    pub depot: GeoCoordinate,
}

impl TruckConfig {
    pub fn info(&self) -> TruckInfo {
        TruckInfo { truck_id: self.id.clone(), depot: self.depot, capacity_l: self.capacity_l }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policies {
    #[serde(flatten)]
    pub monitoring: MonitoringPolicy,
    #[serde(default = "default_agree_tol")]
    pub agree_tol: f64,
}

fn default_agree_tol() -> f64 {
    DEFAULT_AGREE_TOL
}

impl Default for Policies {
    fn default() -> Self {
        Policies { monitoring: MonitoringPolicy::default(), agree_tol: DEFAULT_AGREE_TOL }
    }
}

/// A complete, declarative simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_at_ms: u64,
    pub duration_ms: u64,
    pub bins: Vec<BinConfig>,
    pub trucks: Vec<TruckConfig>,
    /// When empty, every bin and truck goes into a single zone `Z1`.
    #[serde(default)]
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub retransmit: RetransmitPolicy,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub policies: Policies,
}

fn default_start() -> u64 {
    DEFAULT_START_MS
}

impl ScenarioConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A scenario with no bins or trucks.
    pub fn empty(scenario_id: &str, seed: u64, duration_ms: u64) -> Self {
        ScenarioConfig {
            scenario_id: scenario_id.into(),
            seed,
            start_at_ms: DEFAULT_START_MS,
            duration_ms,
            bins: Vec::new(),
            trucks: Vec::new(),
            zones: Vec::new(),
            channel: ChannelParams::default(),
            retransmit: RetransmitPolicy::default(),
            battery: BatteryParams::default(),
            policies: Policies::default(),
        }
    }

    pub fn duration_days(&self) -> f64 {
        self.duration_ms as f64 / MS_PER_DAY as f64
    }

    /// Explicit zones, or one zone holding everything.
    pub fn effective_zones(&self) -> Vec<Zone> {
        if !self.zones.is_empty() {
            return self.zones.clone();
        }
        if self.bins.is_empty() && self.trucks.is_empty() {
            return Vec::new();
        }
        vec![Zone {
            zone_id: "Z1".into(),
            name: "default".into(),
            bin_ids: self.bins.iter().map(|b| b.id.clone()).collect(),
            truck_ids: self.trucks.iter().map(|t| t.id.clone()).collect(),
        }]
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if self.scenario_id.is_empty() {
            v.push("scenario_id must not be empty".into());
        }
        if self.duration_ms == 0 {
            v.push("duration_ms must be > 0".into());
        }

        let mut ids = BTreeSet::new();
        for b in &self.bins {
            let at = |what: &str| format!("bin {:?}: {what}", b.id);
            if b.id.is_empty() {
                v.push("bin id must not be empty".into());
            }
            if !ids.insert(b.id.as_str()) {
                v.push(format!("duplicate bin id {:?}", b.id));
            }
            if let Err(e) = b.geometry.validate(&b.sensor) {
                v.push(at(&e.to_string()));
            }
            if let Err(e) = b.fault.validate() {
                v.push(at(&e.to_string()));
            }
            if !(b.arrival_rate_per_day.is_finite() && b.arrival_rate_per_day >= 0.0) {
                v.push(at(&format!("arrival_rate_per_day {} must be >= 0", b.arrival_rate_per_day)));
            }
            if let Err(e) = b.volume.validate() {
                v.push(at(&e));
            }
            if b.reporting_period_ms == 0 {
                v.push(at("reporting_period_ms must be > 0"));
            }
            if !(b.initial_volume_l >= 0.0 && b.initial_volume_l <= b.geometry.capacity_l) {
                v.push(at(&format!("initial_volume_l {} not in [0, capacity]", b.initial_volume_l)));
            }
            if !(b.initial_battery_v.is_finite() && b.initial_battery_v >= 0.0) {
                v.push(at(&format!("initial_battery_v {} must be >= 0", b.initial_battery_v)));
            }
        }

        let max_bin = self.bins.iter().map(|b| b.geometry.capacity_l).fold(0.0, f64::max);
        let mut truck_ids = BTreeSet::new();
        for t in &self.trucks {
            if t.id.is_empty() {
                v.push("truck id must not be empty".into());
            }
            if !truck_ids.insert(t.id.as_str()) {
                v.push(format!("duplicate truck id {:?}", t.id));
            }
            if !(t.speed_kmh.is_finite() && t.speed_kmh > 0.0) {
                v.push(format!("truck {:?}: speed_kmh {} must be > 0", t.id, t.speed_kmh));
            }
            if !(t.capacity_l.is_finite() && t.capacity_l > 0.0) {
                v.push(format!("truck {:?}: capacity_l {} must be > 0", t.id, t.capacity_l));
            } else if t.capacity_l < max_bin {
                v.push(format!("truck {:?}: capacity_l {} smaller than the largest bin ({max_bin} L)", t.id, t.capacity_l));
            }
        }

        if !self.zones.is_empty() {
            let mut zone_ids = BTreeSet::new();
            let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
            for z in &self.zones {
                if !zone_ids.insert(z.zone_id.as_str()) {
                    v.push(format!("duplicate zone id {:?}", z.zone_id));
                }
                for b in &z.bin_ids {
                    if !ids.contains(b.as_str()) {
                        v.push(format!("zone {:?} lists unknown bin {b:?}", z.zone_id));
                    }
                    if let Some(prev) = owner.insert(b, &z.zone_id) {
                        v.push(format!("bin {b:?} is in both zone {prev:?} and zone {:?}", z.zone_id));
                    }
                }
                for t in &z.truck_ids {
                    if !truck_ids.contains(t.as_str()) {
                        v.push(format!("zone {:?} lists unknown truck {t:?}", z.zone_id));
                    }
                }
            }
            for b in &ids {
                if !owner.contains_key(b) {
                    v.push(format!("bin {b:?} belongs to no zone"));
                }
            }
        }

        if let Err(e) = self.channel.validate() {
            v.push(e.to_string());
        }
        if self.retransmit.timeout_ms == 0 {
            v.push("retransmit.timeout_ms must be > 0".into());
        }
        v.extend(self.battery.violations());
        v.extend(self.policies.monitoring.violations());
        let tol = self.policies.agree_tol;
        if !(tol > 0.0 && tol < 1.0) {
            v.push(format!("policies.agree_tol {tol} not in (0,1)"));
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "scenario_id": "mini", "seed": 1, "duration_ms": 3600000,
            "bins": [{"id": "B1", "position": {"lat": -26.2, "lon": 28.0},
                      "geometry": {"depth_cm": 100, "capacity_l": 240},
                      "arrival_rate_per_day": 10, "volume": {"mu": 1.0, "sigma": 0.5}}],
            "trucks": [{"id": "T1", "capacity_l": 2000, "speed_kmh": 30, "depot": {"lat": -26.21, "lon": 28.01}}]
        }"#
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ScenarioConfig::from_json(minimal().as_bytes()).unwrap();
        assert_eq!(cfg.start_at_ms, DEFAULT_START_MS);
        assert_eq!(cfg.bins[0].reporting_period_ms, DEFAULT_REPORTING_PERIOD_MS);
        assert_eq!(cfg.bins[0].sensor, SensorSpec::default());
        assert_eq!(cfg.policies.monitoring.threshold, 0.70);
        assert_eq!(cfg.policies.agree_tol, 0.05);
        assert_eq!(cfg.channel, ChannelParams::default());
        assert_eq!(cfg.effective_zones()[0].bin_ids, vec!["B1"]);
    }

    #[test]
    fn duplicate_bin_id_is_named() {
        let mut cfg = ScenarioConfig::from_json(minimal().as_bytes()).unwrap();
        cfg.bins.push(cfg.bins[0].clone());
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("duplicate bin id \"B1\""), "{err}");
    }

    #[test]
    fn lists_every_violation() {
        let mut cfg = ScenarioConfig::from_json(minimal().as_bytes()).unwrap();
        cfg.duration_ms = 0;
        cfg.bins[0].arrival_rate_per_day = -1.0;
        cfg.trucks[0].speed_kmh = 0.0;
        cfg.policies.agree_tol = 0.0;
        let v = cfg.validate().unwrap_err().violations();
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn zone_membership_must_be_exact() {
        let mut cfg = ScenarioConfig::from_json(minimal().as_bytes()).unwrap();
        cfg.zones = vec![Zone { zone_id: "A".into(), name: "a".into(), bin_ids: vec![], truck_ids: vec![] }];
        let v = cfg.validate().unwrap_err().violations();
        assert!(v.iter().any(|m| m.contains("belongs to no zone")));
    }

    #[test]
    fn out_of_range_coordinates_fail_to_parse() {
        let bad = minimal().replace("-26.2,", "-126.2,");
        assert!(matches!(ScenarioConfig::from_json(bad.as_bytes()), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::from_json(minimal().as_bytes()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 2;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
