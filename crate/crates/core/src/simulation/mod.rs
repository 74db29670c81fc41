//! Discrete-event simulation of bins, sensors, the radio link and trucks,
//! driving a [`MonitoringCenter`](crate::monitoring::MonitoringCenter).

pub mod battery;
pub mod config;
pub mod deposit;
pub mod engine;
pub mod truck;

pub use battery::{battery_step, Battery, BatteryEvent, BatteryParams};
pub use config::{BinConfig, ConfigError, Policies, ScenarioConfig, TruckConfig, DEFAULT_START_MS};
pub use deposit::{deposit_process, DepositProcess, VolumeDist};
pub use engine::{run, SimError, SimOutput};
pub use truck::{travel_ms, truck_travel, Arrival, Leg, Target, TruckRun, UnknownBin};

/// Environment variable that overrides the scenario seed.
pub const SEED_ENV: &str = "BINFLEET_SEED";

/// Applies the seed override from the environment, if set and numeric.
pub fn apply_seed_override(config: &mut ScenarioConfig) -> Result<(), String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            config.seed = v.trim().parse().map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
