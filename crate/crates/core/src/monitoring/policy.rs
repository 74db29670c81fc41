use serde::{Deserialize, Serialize};

use crate::domain::MS_PER_HOUR;

/// Every tunable of the zone control unit. Defaults: 70% alert threshold,
/// 5% hysteresis, batches of 5 bins or a 4 hour wait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitoringPolicy {
    pub threshold: f64,
    pub hysteresis: f64,
    pub stale_after_ms: u64,
    pub low_battery_v: f64,
    pub battery_rearm_v: f64,
    pub batch_size: usize,
    pub max_wait_ms: u64,
    pub dispatch_interval_ms: u64,
    pub empty_cutoff: f64,
    pub auto_dispatch: bool,
}

impl Default for MonitoringPolicy {
    fn default() -> Self {
        MonitoringPolicy {
            threshold: 0.70,
            hysteresis: 0.05,
            stale_after_ms: 2 * MS_PER_HOUR,
            low_battery_v: 6.0,
            battery_rearm_v: 6.5,
            batch_size: 5,
            max_wait_ms: 4 * MS_PER_HOUR,
            dispatch_interval_ms: 10 * 60 * 1000,
            empty_cutoff: 0.30,
            auto_dispatch: true,
        }
    }
}

impl MonitoringPolicy {
    /// Lists every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            v.push(format!("policies.threshold {} not in (0,1)", self.threshold));
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis < self.threshold) {
            v.push(format!("policies.hysteresis {} not in [0, threshold)", self.hysteresis));
        }
        if !(self.empty_cutoff >= 0.0 && self.empty_cutoff < self.threshold) {
            v.push(format!("policies.empty_cutoff {} not in [0, threshold)", self.empty_cutoff));
        }
        if self.batch_size == 0 {
            v.push("policies.batch_size must be >= 1".into());
        }
        if self.dispatch_interval_ms == 0 {
            v.push("policies.dispatch_interval_ms must be > 0".into());
        }
        if self.stale_after_ms == 0 {
            v.push("policies.stale_after_ms must be > 0".into());
        }
        if !(self.low_battery_v.is_finite() && self.battery_rearm_v.is_finite() && self.low_battery_v < self.battery_rearm_v) {
            v.push(format!(
                "policies.low_battery_v {} must be below battery_rearm_v {}",
                self.low_battery_v, self.battery_rearm_v
            ));
        }
        v
    }
}
