//! Batch dispatch: alerted bins are collected in rounds rather than one
//! truck trip per bin.

use std::collections::BTreeMap;

use crate::domain::Timestamp;
use crate::geo::haversine_m;
use crate::routing::{plan_route, RoutingError, RoutingProblem, Stop, Tour};

use super::model::{AlertRecord, AlertStatus, BinRegistryEntry, TruckInfo, Visit};
use super::policy::MonitoringPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedOrder {
    pub truck_id: String,
    pub visits: Vec<Visit>,
    pub tour: Tour,
    pub alert_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchPlan {
    pub orders: Vec<PlannedOrder>,
    /// Set when the trigger fired but no order could be made.
    pub deferred: Option<String>,
    pub open_bins: usize,
}

#[derive(Debug, Clone, Default)]
struct PendingBin {
    alert_ids: Vec<String>,
    inspect: bool,
    oldest: Option<Timestamp>,
}

/// Groups OPEN dispatchable alerts per bin and, when the batch fills up or
/// the oldest alert has waited `max_wait_ms`, routes every pending bin.
/// Bins go to the truck with the nearest depot (ties to the smaller truck
/// id) and each truck's share becomes one tour.
pub fn plan_dispatch<'a>(
    alerts: impl IntoIterator<Item = &'a AlertRecord>,
    registry: &BTreeMap<String, BinRegistryEntry>,
    trucks: &BTreeMap<String, TruckInfo>,
    policy: &MonitoringPolicy,
    now: Timestamp,
) -> Result<DispatchPlan, RoutingError> {
    let mut pending: BTreeMap<&str, PendingBin> = BTreeMap::new();
    for alert in alerts {
        if alert.status != AlertStatus::Open || !alert.cause.is_dispatchable() {
            continue;
        }
        if !registry.contains_key(&alert.bin_id) {
            continue;
        }
        let p = pending.entry(alert.bin_id.as_str()).or_default();
        p.alert_ids.push(alert.alert_id.clone());
        p.inspect |= alert.cause != super::model::AlertCause::Threshold;
        p.oldest = Some(p.oldest.map_or(alert.created_at, |t| t.min(alert.created_at)));
    }
    let mut plan = DispatchPlan { open_bins: pending.len(), ..Default::default() };
    if pending.is_empty() {
        return Ok(plan);
    }
    let oldest = pending.values().filter_map(|p| p.oldest).min().expect("non-empty");
    let triggered = pending.len() >= policy.batch_size || now.saturating_sub(oldest) >= policy.max_wait_ms;
    if !triggered {
        return Ok(plan);
    }
    if trucks.is_empty() {
        plan.deferred = Some("no trucks registered".into());
        return Ok(plan);
    }

    let mut shares: BTreeMap<&str, Vec<(&str, PendingBin)>> = BTreeMap::new();
    for (bin_id, p) in pending {
        let pos = registry[bin_id].position;
        let truck = trucks
            .values()
            .min_by(|a, b| {
                haversine_m(a.depot, pos)
                    .partial_cmp(&haversine_m(b.depot, pos))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.truck_id.cmp(&b.truck_id))
            })
            .expect("non-empty");
        shares.entry(truck.truck_id.as_str()).or_default().push((bin_id, p));
    }

    for (truck_id, bins) in shares {
        let truck = &trucks[truck_id];
        let stops: Vec<Stop> =
            bins.iter().map(|(id, _)| Stop { bin_id: (*id).to_owned(), position: registry[*id].position }).collect();
        let tour = plan_route(&RoutingProblem::haversine(truck.depot, &stops)?)?;
        let by_id: BTreeMap<&str, &PendingBin> = bins.iter().map(|(id, p)| (*id, p)).collect();
        let visits = tour
            .stops
            .iter()
            .map(|id| Visit { bin_id: id.clone(), position: registry[id].position, inspect: by_id[id.as_str()].inspect })
            .collect();
        let alert_ids = bins.iter().flat_map(|(_, p)| p.alert_ids.iter().cloned()).collect();
        plan.orders.push(PlannedOrder { truck_id: truck_id.to_owned(), visits, tour, alert_ids });
    }
    Ok(plan)
}
