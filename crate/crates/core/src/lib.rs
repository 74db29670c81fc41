//! Smart waste bin fleet: a deterministic simulator of sensor-equipped bins
//! and collection trucks, the monitoring center that turns bin telemetry
//! into alerts and routed work orders, and the collection route planner.
//!
//! Everything that affects monitoring state is an [`events::Event`]; a run
//! is fully described by its event log and can be replayed from it.

pub mod domain;
pub mod eventlog;
pub mod events;
pub mod geo;
pub mod monitoring;
pub mod public;
pub mod report;
pub mod rng;
pub mod routing;
pub mod sensing;
pub mod simulation;
pub mod telemetry;

pub use domain::{clamp_fill, BinGeometry, DomainError, FillFraction, SensorSpec, Timestamp};
pub use geo::{haversine_m, GeoCoordinate};
pub use rng::SeededRng;
