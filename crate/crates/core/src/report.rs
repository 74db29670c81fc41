//! Run summary derived from the event log alone, so a stored report can be
//! checked against the log it claims to describe.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Timestamp;
use crate::events::{Event, EventKind};
use crate::monitoring::{AlertCause, AlertStatus, IngestResult, OrderStatus};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageTotals {
    /// First transmissions.
    pub sent: u64,
    pub retransmitted: u64,
    /// Attempts the channel dropped.
    pub lost: u64,
    /// Attempts the channel delivered twice.
    pub duplicated: u64,
    pub delivered: u64,
    pub accepted: u64,
    pub duplicates_dropped: u64,
    pub acks_received: u64,
    pub link_degraded: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub deposits: u64,
    pub deposited_l: f64,
    pub collections: u64,
    pub collected_l: f64,
    pub overflows: u64,
    pub overflow_l: f64,
    /// Waste still in bins at the end.
    pub residual_l: f64,
    pub alerts_by_cause: BTreeMap<String, u64>,
    pub orders_created: u64,
    pub orders_done: u64,
    pub low_battery: u64,
    pub truck_distance_m: f64,
    pub messages: MessageTotals,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub seed: u64,
    pub totals: Totals,
    pub max_fill_by_bin: BTreeMap<String, f64>,
    /// Over THRESHOLD alerts resolved by a collection.
    pub threshold_alerts_collected: u64,
    pub mean_alert_to_collection_ms: Option<f64>,
    /// max wait + dispatch interval + the longest order from creation to done.
    pub latency_bound_ms: u64,
}

impl RunReport {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> RunReport {
        let mut r = RunReport::default();
        for c in AlertCause::ALL {
            r.totals.alerts_by_cause.insert(c.as_str().to_owned(), 0);
        }
        let mut bin_volume: BTreeMap<String, f64> = BTreeMap::new();
        let mut threshold_alerts: BTreeMap<String, Timestamp> = BTreeMap::new();
        let mut order_created: BTreeMap<String, Timestamp> = BTreeMap::new();
        let mut longest_order = 0u64;
        let mut latency_sum = 0u64;
        let mut base_bound = 0u64;

        for e in events {
            let t = &mut r.totals;
            match &e.kind {
                EventKind::Start { scenario_id, seed, max_wait_ms, dispatch_interval_ms } => {
                    r.scenario_id = scenario_id.clone();
                    r.seed = *seed;
                    base_bound = max_wait_ms + dispatch_interval_ms;
                }
                EventKind::BinRegistered { bin_id, .. } => {
                    bin_volume.insert(bin_id.clone(), 0.0);
                    r.max_fill_by_bin.insert(bin_id.clone(), 0.0);
                }
                EventKind::Deposit { bin_id, volume_l, bin_volume_l, fill, .. } => {
                    t.deposits += 1;
                    t.deposited_l += volume_l;
                    bin_volume.insert(bin_id.clone(), *bin_volume_l);
                    let m = r.max_fill_by_bin.entry(bin_id.clone()).or_insert(0.0);
                    *m = m.max(*fill);
                }
                EventKind::Overflow { overflow_l, .. } => {
                    t.overflows += 1;
                    t.overflow_l += overflow_l;
                }
                EventKind::Collect { bin_id, volume_l, .. } => {
                    t.collections += 1;
                    t.collected_l += volume_l;
                    bin_volume.insert(bin_id.clone(), 0.0);
                }
                EventKind::TruckArrive { leg_m, .. } => t.truck_distance_m += leg_m,
                EventKind::Send { attempt, copies, .. } => {
                    let m = &mut t.messages;
                    if *attempt == 0 {
                        m.sent += 1;
                    } else {
                        m.retransmitted += 1;
                    }
                    match copies {
                        0 => m.lost += 1,
                        2.. => m.duplicated += 1,
                        _ => {}
                    }
                }
                EventKind::Deliver { result, .. } => {
                    let m = &mut t.messages;
                    m.delivered += 1;
                    match result {
                        IngestResult::Accepted => m.accepted += 1,
                        IngestResult::Duplicate => m.duplicates_dropped += 1,
                        _ => {}
                    }
                }
                EventKind::Ack { .. } => t.messages.acks_received += 1,
                EventKind::LinkDegraded { .. } => t.messages.link_degraded += 1,
                EventKind::LowBattery { .. } => t.low_battery += 1,
                EventKind::Alert { alert } => {
                    *t.alerts_by_cause.entry(alert.cause.as_str().to_owned()).or_insert(0) += 1;
                    if alert.cause == AlertCause::Threshold {
                        threshold_alerts.insert(alert.alert_id.clone(), alert.created_at);
                    }
                }
                EventKind::AlertStatus { alert_id, status: AlertStatus::Resolved, .. } => {
                    // collections resolve in the same ms as the COLLECT; a
                    // fill drop resolves nothing for THRESHOLD alerts
                    if let Some(created) = threshold_alerts.remove(alert_id) {
                        r.threshold_alerts_collected += 1;
                        latency_sum += e.at.saturating_sub(created);
                    }
                }
                EventKind::OrderCreated { order } => {
                    t.orders_created += 1;
                    order_created.insert(order.order_id.clone(), e.at);
                }
                EventKind::OrderStatus { order_id, status: OrderStatus::Done } => {
                    t.orders_done += 1;
                    if let Some(c) = order_created.get(order_id) {
                        longest_order = longest_order.max(e.at.saturating_sub(*c));
                    }
                }
                _ => {}
            }
        }
        r.totals.residual_l = bin_volume.values().sum();
        r.latency_bound_ms = base_bound + longest_order;
        if r.threshold_alerts_collected > 0 {
            r.mean_alert_to_collection_ms = Some(latency_sum as f64 / r.threshold_alerts_collected as f64);
        }
        r
    }

    /// deposited = collected + overflow + residual, to `tol` liters.
    pub fn conserves_volume(&self, tol: f64) -> bool {
        let t = &self.totals;
        (t.deposited_l - (t.collected_l + t.overflow_l + t.residual_l)).abs() <= tol
    }

    /// Field-by-field comparison that tolerates float rounding from a JSON
    /// round trip.
    pub fn matches(&self, other: &RunReport) -> bool {
        let a = serde_json::to_value(self).expect("report serializes");
        let b = serde_json::to_value(other).expect("report serializes");
        values_match(&a, &b)
    }
}

fn values_match(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
        }
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_match(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ => a == b,
    }
}
