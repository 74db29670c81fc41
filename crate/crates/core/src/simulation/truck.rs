//! Truck movement along a planned route, with unload trips to the depot
//! whenever the next bin would not fit.

use std::collections::BTreeMap;

use crate::domain::Timestamp;
use crate::events::{Event, EventKind, DEPOT_STOP};
use crate::geo::{haversine_m, GeoCoordinate};
use crate::routing::Stop;

use super::config::TruckConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Index into the route.
    Bin(usize),
    /// Unload; then resume at the given route index, or finish.
    Depot { resume: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub target: Target,
    pub distance_m: f64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arrival {
    /// At a bin. `collected` is `None` when the truck must unload first, in
    /// which case `next` heads to the depot.
    AtBin { bin_id: String, leg_m: f64, collected: Option<f64>, next: Leg },
    /// At the depot. `next` is `None` when the route is finished.
    AtDepot { leg_m: f64, unloaded_l: f64, next: Option<Leg> },
}

/// One truck working one route.
#[derive(Debug, Clone)]
pub struct TruckRun {
    pub truck: TruckConfig,
    pub route: Vec<Stop>,
    pub position: GeoCoordinate,
    pub load_l: f64,
    pub distance_m: f64,
    leg: Option<Leg>,
}

/// Travel time in ms at `speed_kmh`, rounded to the nearest ms.
pub fn travel_ms(distance_m: f64, speed_kmh: f64) -> u64 {
    (distance_m / (speed_kmh / 3.6) * 1000.0).round() as u64
}

impl TruckRun {
    /// Starts from the depot, empty.
    pub fn new(truck: TruckConfig, route: Vec<Stop>) -> Self {
        let position = truck.depot;
        TruckRun { truck, route, position, load_l: 0.0, distance_m: 0.0, leg: None }
    }

    fn leg_to(&mut self, target: Target) -> Leg {
        let to = match target {
            Target::Bin(i) => self.route[i].position,
            Target::Depot { .. } => self.truck.depot,
        };
        let distance_m = haversine_m(self.position, to);
        let leg = Leg { target, distance_m, duration_ms: travel_ms(distance_m, self.truck.speed_kmh) };
        self.leg = Some(leg);
        leg
    }

    /// First leg. An empty route goes straight back to the depot.
    pub fn depart(&mut self) -> Leg {
        if self.route.is_empty() {
            self.leg_to(Target::Depot { resume: None })
        } else {
            self.leg_to(Target::Bin(0))
        }
    }

    /// Completes the current leg. `bin_volume` is asked for the volume of
    /// the bin the truck has reached.
    pub fn arrive(&mut self, bin_volume: impl FnOnce(&str) -> f64) -> Arrival {
        let leg = self.leg.take().expect("arrive without a leg in progress");
        self.distance_m += leg.distance_m;
        match leg.target {
            Target::Bin(i) => {
                self.position = self.route[i].position;
                let bin_id = self.route[i].bin_id.clone();
                let volume = bin_volume(&bin_id);
                if self.load_l > 0.0 && self.load_l + volume > self.truck.capacity_l {
                    let next = self.leg_to(Target::Depot { resume: Some(i) });
                    return Arrival::AtBin { bin_id, leg_m: leg.distance_m, collected: None, next };
                }
                self.load_l += volume;
                let next = if i + 1 < self.route.len() {
                    self.leg_to(Target::Bin(i + 1))
                } else {
                    self.leg_to(Target::Depot { resume: None })
                };
                Arrival::AtBin { bin_id, leg_m: leg.distance_m, collected: Some(volume), next }
            }
            Target::Depot { resume } => {
                self.position = self.truck.depot;
                let unloaded_l = std::mem::take(&mut self.load_l);
                let next = resume.map(|i| self.leg_to(Target::Bin(i)));
                Arrival::AtDepot { leg_m: leg.distance_m, unloaded_l, next }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("route visits unknown bin {0:?}")]
pub struct UnknownBin(pub String);

/// Drives a whole route from `start`, emptying bins in `volumes`, and
/// returns the truck events in time order.
pub fn truck_travel(
    truck: &TruckConfig,
    order_id: &str,
    route: &[Stop],
    volumes: &mut BTreeMap<String, f64>,
    start: Timestamp,
) -> Result<Vec<Event>, UnknownBin> {
    if let Some(s) = route.iter().find(|s| !volumes.contains_key(&s.bin_id)) {
        return Err(UnknownBin(s.bin_id.clone()));
    }
    let mut run = TruckRun::new(truck.clone(), route.to_vec());
    let id = truck.id.clone();
    let mut events =
        vec![Event::new(start, EventKind::TruckDepart { truck_id: id.clone(), order_id: order_id.to_owned() })];
    let mut now = start;
    let mut leg = run.depart();
    loop {
        now = now + leg.duration_ms;
        match run.arrive(|b| volumes[b]) {
            Arrival::AtBin { bin_id, leg_m, collected, next } => {
                events.push(Event::new(now, EventKind::TruckArrive { truck_id: id.clone(), stop: bin_id.clone(), leg_m }));
                if let Some(volume_l) = collected {
                    volumes.insert(bin_id.clone(), 0.0);
                    events.push(Event::new(
                        now,
                        EventKind::Collect { truck_id: id.clone(), order_id: order_id.to_owned(), bin_id, volume_l },
                    ));
                }
                leg = next;
            }
            Arrival::AtDepot { leg_m, unloaded_l, next } => {
                events.push(Event::new(
                    now,
                    EventKind::TruckArrive { truck_id: id.clone(), stop: DEPOT_STOP.into(), leg_m },
                ));
                events.push(Event::new(now, EventKind::DepotUnload { truck_id: id.clone(), load_l: unloaded_l }));
                match next {
                    Some(l) => leg = l,
                    None => return Ok(events),
                }
            }
        }
    }
}
