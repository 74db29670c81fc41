use serde::{Deserialize, Serialize};

/// Drain model for the 9 V pack. The per-transmission and per-hour costs
/// are modelling choices, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub nominal_v: f64,
    pub per_tx_v: f64,
    pub per_hour_v: f64,
    pub low_v: f64,
    pub rearm_v: f64,
    pub cutoff_v: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams { nominal_v: 9.0, per_tx_v: 0.002, per_hour_v: 0.0005, low_v: 6.0, rearm_v: 6.5, cutoff_v: 5.0 }
    }
}

impl BatteryParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [("per_tx_v", self.per_tx_v), ("per_hour_v", self.per_hour_v), ("cutoff_v", self.cutoff_v)] {
            if !(x.is_finite() && x >= 0.0) {
                v.push(format!("battery.{name} {x} must be >= 0"));
            }
        }
        if !(self.cutoff_v < self.low_v && self.low_v < self.rearm_v) {
            v.push(format!(
                "battery thresholds must satisfy cutoff_v < low_v < rearm_v ({} < {} < {})",
                self.cutoff_v, self.low_v, self.rearm_v
            ));
        }
        v
    }
}

/// Voltage after `transmissions` sends and `idle_hours` of standby.
pub fn battery_step(battery_v: f64, transmissions: u32, idle_hours: f64, params: &BatteryParams) -> f64 {
    let drain = transmissions as f64 * params.per_tx_v + idle_hours * params.per_hour_v;
    (battery_v - drain).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatteryEvent {
    Low,
    Depleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub volts: f64,
    low_raised: bool,
    depleted: bool,
}

impl Battery {
    pub fn new(volts: f64) -> Self {
        Battery { volts, low_raised: false, depleted: false }
    }

    /// Below `cutoff_v` the bin stops transmitting.
    pub fn can_transmit(&self) -> bool {
        !self.depleted
    }

    /// Drains and reports threshold crossings. LOW fires once and re-arms
    /// only after the voltage climbs back above `rearm_v`.
    pub fn step(&mut self, transmissions: u32, idle_hours: f64, params: &BatteryParams) -> Vec<BatteryEvent> {
        self.volts = battery_step(self.volts, transmissions, idle_hours, params);
        self.check(params)
    }

    pub fn set_volts(&mut self, volts: f64, params: &BatteryParams) -> Vec<BatteryEvent> {
        self.volts = volts;
        self.check(params)
    }

    fn check(&mut self, params: &BatteryParams) -> Vec<BatteryEvent> {
        let mut out = Vec::new();
        if self.volts > params.rearm_v {
            self.low_raised = false;
        }
        if self.volts > params.cutoff_v {
            self.depleted = false;
        }
        if self.volts <= params.low_v && !self.low_raised {
            self.low_raised = true;
            out.push(BatteryEvent::Low);
        }
        if self.volts <= params.cutoff_v && !self.depleted {
            self.depleted = true;
            out.push(BatteryEvent::Depleted);
        }
        out
    }
}
