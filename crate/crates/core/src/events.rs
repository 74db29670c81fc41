//! The event vocabulary shared by the simulator and the monitoring center.
//!
//! A run's log is a sequence of [`Event`]s. Kinds marked as center events
//! are the only inputs to [`MonitoringState::apply`](crate::monitoring::MonitoringState::apply);
//! folding them in order rebuilds the monitoring state.

use serde::{Deserialize, Serialize};

use crate::domain::{FillFraction, Timestamp};
use crate::geo::GeoCoordinate;
use crate::monitoring::{AlertRecord, AlertStatus, IngestResult, OrderStatus, TruckInfo, WorkOrder, Zone};
use crate::sensing::{Reading, VoteKind};
use crate::telemetry::TelemetryMessage;

pub const DEPOT_STOP: &str = "DEPOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(at: Timestamp, kind: EventKind) -> Self {
        Event { at, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Start {
        scenario_id: String,
        seed: u64,
        max_wait_ms: u64,
        dispatch_interval_ms: u64,
    },
    End,

    // center: registration
    ZoneDefined {
        zone: Zone,
    },
    BinRegistered {
        bin_id: String,
        zone_id: String,
        position: GeoCoordinate,
    },
    TruckRegistered {
        truck: TruckInfo,
    },

    // bins
    Deposit {
        bin_id: String,
        volume_l: f64,
        stored_l: f64,
        overflow_l: f64,
        bin_volume_l: f64,
        fill: f64,
    },
    Overflow {
        bin_id: String,
        overflow_l: f64,
    },
    SensorRead {
        bin_id: String,
        true_fill: f64,
        sensor_a_cm: Reading,
        sensor_b_cm: Reading,
        vote_kind: VoteKind,
        vote_fill: Option<FillFraction>,
    },
    /// One transmission attempt; `attempt` 0 is the original, `copies` is
    /// how many deliveries the channel scheduled (0 = lost, 2 = duplicated).
    Send {
        bin_id: String,
        seq: u64,
        attempt: u32,
        copies: u32,
    },
    Ack {
        bin_id: String,
        seq: u64,
    },
    LinkDegraded {
        bin_id: String,
        seq: u64,
    },
    LinkRestored {
        bin_id: String,
    },
    LowBattery {
        bin_id: String,
        battery_v: f64,
    },
    BatteryDepleted {
        bin_id: String,
        battery_v: f64,
    },

    // trucks
    TruckDepart {
        truck_id: String,
        order_id: String,
    },
    TruckArrive {
        truck_id: String,
        stop: String,
        leg_m: f64,
    },
    Collect {
        truck_id: String,
        order_id: String,
        bin_id: String,
        volume_l: f64,
    },
    DepotUnload {
        truck_id: String,
        load_l: f64,
    },

    // center: telemetry, alerts, orders
    Deliver {
        message: TelemetryMessage,
        result: IngestResult,
    },
    Tamper {
        bin_id: String,
        seq: u64,
    },
    Alert {
        alert: AlertRecord,
    },
    AlertStatus {
        alert_id: String,
        status: AlertStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order_id: Option<String>,
    },
    Rearm {
        bin_id: String,
    },
    OrderCreated {
        order: WorkOrder,
    },
    OrderStatus {
        order_id: String,
        status: OrderStatus,
    },
    DispatchDeferred {
        reason: String,
        open_bins: usize,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Start { .. } => "START",
            EventKind::End => "END",
            EventKind::ZoneDefined { .. } => "ZONE_DEFINED",
            EventKind::BinRegistered { .. } => "BIN_REGISTERED",
            EventKind::TruckRegistered { .. } => "TRUCK_REGISTERED",
            EventKind::Deposit { .. } => "DEPOSIT",
            EventKind::Overflow { .. } => "OVERFLOW",
            EventKind::SensorRead { .. } => "SENSOR_READ",
            EventKind::Send { .. } => "SEND",
            EventKind::Ack { .. } => "ACK",
            EventKind::LinkDegraded { .. } => "LINK_DEGRADED",
            EventKind::LinkRestored { .. } => "LINK_RESTORED",
            EventKind::LowBattery { .. } => "LOW_BATTERY",
            EventKind::BatteryDepleted { .. } => "BATTERY_DEPLETED",
            EventKind::TruckDepart { .. } => "TRUCK_DEPART",
            EventKind::TruckArrive { .. } => "TRUCK_ARRIVE",
            EventKind::Collect { .. } => "COLLECT",
            EventKind::DepotUnload { .. } => "DEPOT_UNLOAD",
            EventKind::Deliver { .. } => "DELIVER",
            EventKind::Tamper { .. } => "TAMPER",
            EventKind::Alert { .. } => "ALERT",
            EventKind::AlertStatus { .. } => "ALERT_STATUS",
            EventKind::Rearm { .. } => "REARM",
            EventKind::OrderCreated { .. } => "ORDER_CREATED",
            EventKind::OrderStatus { .. } => "ORDER_STATUS",
            EventKind::DispatchDeferred { .. } => "DISPATCH_DEFERRED",
        }
    }

    /// Whether the monitoring center's state depends on this event.
    pub fn is_center_event(&self) -> bool {
        matches!(
            self,
            EventKind::ZoneDefined { .. }
                | EventKind::BinRegistered { .. }
                | EventKind::TruckRegistered { .. }
                | EventKind::Deliver { .. }
                | EventKind::Tamper { .. }
                | EventKind::Alert { .. }
                | EventKind::AlertStatus { .. }
                | EventKind::Rearm { .. }
                | EventKind::OrderCreated { .. }
                | EventKind::OrderStatus { .. }
                | EventKind::DispatchDeferred { .. }
        )
    }
}
