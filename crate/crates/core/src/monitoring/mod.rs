//! The zone control unit / monitoring center.
//!
//! Ingests telemetry with (bin, seq) dedup, keeps the per-bin registry,
//! raises alerts at the fill threshold, batches alerted bins into routed
//! work orders, and forecasts when bins will fill. State is event-sourced:
//! see [`MonitoringState::apply`] and [`replay`].

mod alerts;
mod center;
mod dispatch;
mod forecast;
mod model;
mod policy;
mod replay;

pub use alerts::{evaluate_alerts, AlertEvaluation};
pub use center::{CenterError, IngestOutcome, IngestStats, MonitoringCenter, OrderRequest};
pub use dispatch::{plan_dispatch, DispatchPlan, PlannedOrder};
pub use forecast::{fit_line, forecast_full_at, Forecast, NoForecast};
pub use model::{
    payload_digest, AlertCause, AlertRecord, AlertStatus, ApplyError, BinRegistryEntry, FillSample, IngestResult,
    MonitoringState, OrderStatus, TruckInfo, Visit, WorkOrder, Zone, HISTORY_LEN, SEQ_WINDOW,
};
pub use policy::MonitoringPolicy;
pub use replay::{replay, replay_events};
