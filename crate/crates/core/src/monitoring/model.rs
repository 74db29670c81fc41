use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{FillFraction, Timestamp};
use crate::events::{Event, EventKind};
use crate::geo::GeoCoordinate;
use crate::sensing::VoteKind;
use crate::telemetry::{encode, TelemetryMessage};

/// Samples kept per bin for forecasting.
pub const HISTORY_LEN: usize = 96;
/// How far below the newest seq a bin's seen-set reaches. Older seqs are
/// rejected as STALE_SEQ.
pub const SEQ_WINDOW: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: String,
    pub name: String,
    pub bin_ids: Vec<String>,
    #[serde(default)]
    pub truck_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckInfo {
    pub truck_id: String,
    pub depot: GeoCoordinate,
    pub capacity_l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertCause {
    Threshold,
    Disagree,
    DualFault,
    LowBattery,
    Stale,
}

impl AlertCause {
    pub const ALL: [AlertCause; 5] =
        [AlertCause::Threshold, AlertCause::Disagree, AlertCause::DualFault, AlertCause::LowBattery, AlertCause::Stale];

    /// Causes that send a truck. Battery and staleness are maintenance.
    pub fn is_dispatchable(self) -> bool {
        matches!(self, AlertCause::Threshold | AlertCause::Disagree | AlertCause::DualFault)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlertCause::Threshold => "THRESHOLD",
            AlertCause::Disagree => "DISAGREE",
            AlertCause::DualFault => "DUAL_FAULT",
            AlertCause::LowBattery => "LOW_BATTERY",
            AlertCause::Stale => "STALE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertStatus {
    Open,
    Dispatched,
    Resolved,
}

impl AlertStatus {
    pub fn is_active(self) -> bool {
        self != AlertStatus::Resolved
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OPEN" => Some(AlertStatus::Open),
            "DISPATCHED" => Some(AlertStatus::Dispatched),
            "RESOLVED" => Some(AlertStatus::Resolved),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub alert_id: String,
    pub bin_id: String,
    pub created_at: Timestamp,
    /// Absent for causes with no fill reading (DUAL_FAULT, STALE).
    pub fill_at_alert: Option<FillFraction>,
    pub cause: AlertCause,
    pub status: AlertStatus,
    #[serde(default)]
    pub order_id: Option<String>,
    #[serde(default)]
    pub resolved_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderStatus {
    Created,
    Assigned,
    InProgress,
    Done,
}

impl OrderStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CREATED" => Some(OrderStatus::Created),
            "ASSIGNED" => Some(OrderStatus::Assigned),
            "IN_PROGRESS" => Some(OrderStatus::InProgress),
            "DONE" => Some(OrderStatus::Done),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub bin_id: String,
    pub position: GeoCoordinate,
    /// Sent because the sensors disagreed or both faulted.
    pub inspect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub order_id: String,
    pub truck_id: String,
    pub visits: Vec<Visit>,
    pub planned_route_m: f64,
    pub created_at: Timestamp,
    pub status: OrderStatus,
    pub alert_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillSample {
    pub at: Timestamp,
    pub fill: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IngestResult {
    Accepted,
    Duplicate,
    StaleSeq,
    UnknownBin,
}

impl fmt::Display for IngestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IngestResult::Accepted => "ACCEPTED",
            IngestResult::Duplicate => "DUPLICATE",
            IngestResult::StaleSeq => "STALE_SEQ",
            IngestResult::UnknownBin => "UNKNOWN_BIN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRegistryEntry {
    pub bin_id: String,
    pub zone_id: String,
    pub position: GeoCoordinate,
    pub registered_at: Timestamp,
    pub latest_fill: Option<FillFraction>,
    pub latest_vote: Option<VoteKind>,
    pub latest_seq: Option<u64>,
    pub last_heard_at: Option<Timestamp>,
    pub battery_v: Option<f64>,
    /// Time-sorted, at most [`HISTORY_LEN`] entries.
    pub history: VecDeque<FillSample>,
    /// seq -> payload digest for seqs within [`SEQ_WINDOW`] of the newest.
    pub seen: BTreeMap<u64, String>,
    pub threshold_armed: bool,
}

impl BinRegistryEntry {
    pub fn new(bin_id: String, zone_id: String, position: GeoCoordinate, registered_at: Timestamp) -> Self {
        BinRegistryEntry {
            bin_id,
            zone_id,
            position,
            registered_at,
            latest_fill: None,
            latest_vote: None,
            latest_seq: None,
            last_heard_at: None,
            battery_v: None,
            history: VecDeque::new(),
            seen: BTreeMap::new(),
            threshold_armed: true,
        }
    }

    pub fn classify(&self, msg: &TelemetryMessage) -> (IngestResult, bool) {
        let digest = payload_digest(msg);
        if let Some(prev) = self.seen.get(&msg.seq) {
            return (IngestResult::Duplicate, *prev != digest);
        }
        match self.latest_seq {
            Some(latest) if msg.seq <= latest && latest - msg.seq >= SEQ_WINDOW => (IngestResult::StaleSeq, false),
            _ => (IngestResult::Accepted, false),
        }
    }

    fn accept(&mut self, msg: &TelemetryMessage, received_at: Timestamp) {
        let newest = self.latest_seq.is_none_or(|l| msg.seq > l);
        self.seen.insert(msg.seq, payload_digest(msg));
        if newest {
            self.latest_seq = Some(msg.seq);
            self.latest_fill = msg.vote.fill;
            self.latest_vote = Some(msg.vote.kind);
            self.battery_v = Some(msg.battery_v);
            self.position = msg.position;
            self.last_heard_at = Some(received_at);
            let floor = msg.seq.saturating_sub(SEQ_WINDOW);
            self.seen = self.seen.split_off(&floor);
        }
        if let Some(fill) = msg.vote.fill {
            let sample = FillSample { at: msg.sent_at, fill: fill.value() };
            let pos = self.history.partition_point(|s| s.at <= sample.at);
            self.history.insert(pos, sample);
            while self.history.len() > HISTORY_LEN {
                self.history.pop_front();
            }
        }
    }
}

/// Digest of the encoded wire line; identifies a payload for dedup and
/// tamper detection.
pub fn payload_digest(msg: &TelemetryMessage) -> String {
    let digest = Sha256::digest(encode(msg));
    hex::encode(&digest[..16])
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error("unknown bin {0:?}")]
    UnknownBin(String),
    #[error("unknown alert {0:?}")]
    UnknownAlert(String),
    #[error("unknown order {0:?}")]
    UnknownOrder(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("illegal transition for {id}: {from} -> {to}")]
    IllegalTransition { id: String, from: String, to: String },
}

/// Everything the monitoring center knows. Mutated only by [`apply`].
///
/// [`apply`]: MonitoringState::apply
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitoringState {
    pub zones: BTreeMap<String, Zone>,
    pub trucks: BTreeMap<String, TruckInfo>,
    pub registry: BTreeMap<String, BinRegistryEntry>,
    pub alerts: BTreeMap<String, AlertRecord>,
    pub orders: BTreeMap<String, WorkOrder>,
    pub idempotency: BTreeMap<String, String>,
    pub next_alert: u64,
    pub next_order: u64,
}

impl MonitoringState {
    pub fn new() -> Self {
        MonitoringState::default()
    }

    /// Folds one event. Non-center events are ignored and return `false`.
    pub fn apply(&mut self, event: &Event) -> Result<bool, ApplyError> {
        let at = event.at;
        match &event.kind {
            EventKind::ZoneDefined { zone } => {
                self.zones.insert(zone.zone_id.clone(), zone.clone());
            }
            EventKind::BinRegistered { bin_id, zone_id, position } => {
                if self.registry.contains_key(bin_id) {
                    return Err(ApplyError::DuplicateId(bin_id.clone()));
                }
                self.registry
                    .insert(bin_id.clone(), BinRegistryEntry::new(bin_id.clone(), zone_id.clone(), *position, at));
            }
            EventKind::TruckRegistered { truck } => {
                self.trucks.insert(truck.truck_id.clone(), truck.clone());
            }
            EventKind::Deliver { message, result } => {
                if *result == IngestResult::Accepted {
                    let entry = self
                        .registry
                        .get_mut(&message.bin_id)
                        .ok_or_else(|| ApplyError::UnknownBin(message.bin_id.clone()))?;
                    entry.accept(message, at);
                }
            }
            EventKind::Tamper { .. } | EventKind::DispatchDeferred { .. } => {}
            EventKind::Alert { alert } => {
                if self.alerts.contains_key(&alert.alert_id) {
                    return Err(ApplyError::DuplicateId(alert.alert_id.clone()));
                }
                let entry =
                    self.registry.get_mut(&alert.bin_id).ok_or_else(|| ApplyError::UnknownBin(alert.bin_id.clone()))?;
                if alert.cause == AlertCause::Threshold {
                    entry.threshold_armed = false;
                }
                self.next_alert += 1;
                self.alerts.insert(alert.alert_id.clone(), alert.clone());
            }
            EventKind::AlertStatus { alert_id, status, order_id } => {
                let alert = self.alerts.get_mut(alert_id).ok_or_else(|| ApplyError::UnknownAlert(alert_id.clone()))?;
                if alert.status == AlertStatus::Resolved || *status < alert.status {
                    return Err(ApplyError::IllegalTransition {
                        id: alert_id.clone(),
                        from: format!("{:?}", alert.status),
                        to: format!("{status:?}"),
                    });
                }
                alert.status = *status;
                if order_id.is_some() {
                    alert.order_id = order_id.clone();
                }
                if *status == AlertStatus::Resolved {
                    alert.resolved_at = Some(at);
                }
            }
            EventKind::Rearm { bin_id } => {
                let entry = self.registry.get_mut(bin_id).ok_or_else(|| ApplyError::UnknownBin(bin_id.clone()))?;
                entry.threshold_armed = true;
            }
            EventKind::OrderCreated { order } => {
                if self.orders.contains_key(&order.order_id) {
                    return Err(ApplyError::DuplicateId(order.order_id.clone()));
                }
                if let Some(key) = &order.idempotency_key {
                    self.idempotency.insert(key.clone(), order.order_id.clone());
                }
                self.next_order += 1;
                self.orders.insert(order.order_id.clone(), order.clone());
            }
            EventKind::OrderStatus { order_id, status } => {
                let order = self.orders.get_mut(order_id).ok_or_else(|| ApplyError::UnknownOrder(order_id.clone()))?;
                if *status <= order.status {
                    return Err(ApplyError::IllegalTransition {
                        id: order_id.clone(),
                        from: format!("{:?}", order.status),
                        to: format!("{status:?}"),
                    });
                }
                order.status = *status;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Causes with an OPEN or DISPATCHED alert for `bin_id`.
    pub fn active_causes(&self, bin_id: &str) -> BTreeSet<AlertCause> {
        self.alerts.values().filter(|a| a.bin_id == bin_id && a.status.is_active()).map(|a| a.cause).collect()
    }

    pub fn active_alert(&self, bin_id: &str, cause: AlertCause) -> Option<&AlertRecord> {
        self.alerts.values().find(|a| a.bin_id == bin_id && a.cause == cause && a.status.is_active())
    }

    /// SHA-256 over the canonical JSON form. Maps are ordered, so equal
    /// states hash equally.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
