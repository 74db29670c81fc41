use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Timestamp;
use crate::events::{Event, EventKind};
use crate::geo::GeoCoordinate;
use crate::routing::{plan_route, RoutingError, RoutingProblem, Stop, Tour};
use crate::telemetry::{AckMessage, TelemetryMessage};

use super::alerts::evaluate_alerts;
use super::dispatch::{plan_dispatch, PlannedOrder};
use super::forecast::{forecast_full_at, Forecast};
use super::model::{
    AlertCause, AlertRecord, AlertStatus, ApplyError, IngestResult, MonitoringState, OrderStatus, TruckInfo, Visit,
    WorkOrder, Zone,
};
use super::policy::MonitoringPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CenterError {
    #[error("unknown bin {0:?}")]
    UnknownBin(String),
    #[error("unknown truck {0:?}")]
    UnknownTruck(String),
    #[error("unknown order {0:?}")]
    UnknownOrder(String),
    #[error("bin {0:?} has no open alert; set override to dispatch anyway")]
    NoOpenAlert(String),
    #[error("order must list at least one bin")]
    EmptyOrder,
    #[error("order {id}: cannot move from {from:?} to {to:?}")]
    BadTransition { id: String, from: OrderStatus, to: OrderStatus },
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

/// Counters that describe traffic but are not part of the replicated state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub accepted: u64,
    pub duplicate: u64,
    pub stale_seq: u64,
    pub unknown_bin: u64,
    pub tamper: u64,
}

impl IngestStats {
    pub fn record(&mut self, result: IngestResult) {
        match result {
            IngestResult::Accepted => self.accepted += 1,
            IngestResult::Duplicate => self.duplicate += 1,
            IngestResult::StaleSeq => self.stale_seq += 1,
            IngestResult::UnknownBin => self.unknown_bin += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub result: IngestResult,
    pub ack: Option<AckMessage>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub bin_ids: Vec<String>,
    pub truck_id: String,
    #[serde(default, rename = "override")]
    pub override_alerts: bool,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

/// The zone control unit. All mutation goes through [`MonitoringState::apply`];
/// every command returns the events it applied so callers can persist them.
#[derive(Debug, Clone)]
pub struct MonitoringCenter {
    state: MonitoringState,
    policy: MonitoringPolicy,
    stats: IngestStats,
}

impl MonitoringCenter {
    pub fn new(policy: MonitoringPolicy) -> Self {
        MonitoringCenter { state: MonitoringState::new(), policy, stats: IngestStats::default() }
    }

    pub fn from_state(state: MonitoringState, policy: MonitoringPolicy) -> Self {
        MonitoringCenter { state, policy, stats: IngestStats::default() }
    }

    pub fn state(&self) -> &MonitoringState {
        &self.state
    }

    pub fn policy(&self) -> &MonitoringPolicy {
        &self.policy
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    fn commit(&mut self, now: Timestamp, kinds: Vec<EventKind>) -> Result<Vec<Event>, ApplyError> {
        let mut out = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let ev = Event::new(now, kind);
            self.state.apply(&ev)?;
            out.push(ev);
        }
        Ok(out)
    }

    /// Registers zones, their bins and trucks.
    pub fn register(
        &mut self,
        zones: &[Zone],
        bins: &[(String, GeoCoordinate)],
        trucks: &[TruckInfo],
        now: Timestamp,
    ) -> Result<Vec<Event>, ApplyError> {
        let zone_of: BTreeMap<&str, &str> =
            zones.iter().flat_map(|z| z.bin_ids.iter().map(move |b| (b.as_str(), z.zone_id.as_str()))).collect();
        let mut kinds: Vec<EventKind> = zones.iter().map(|z| EventKind::ZoneDefined { zone: z.clone() }).collect();
        for (bin_id, position) in bins {
            let zone_id = zone_of.get(bin_id.as_str()).copied().unwrap_or_default().to_owned();
            kinds.push(EventKind::BinRegistered { bin_id: bin_id.clone(), zone_id, position: *position });
        }
        kinds.extend(trucks.iter().map(|t| EventKind::TruckRegistered { truck: t.clone() }));
        self.commit(now, kinds)
    }

    /// Accepts one decoded reading. Duplicates are acked but change nothing.
    pub fn ingest(&mut self, msg: &TelemetryMessage, now: Timestamp) -> Result<IngestOutcome, ApplyError> {
        let Some(entry) = self.state.registry.get(&msg.bin_id) else {
            self.stats.record(IngestResult::UnknownBin);
            let result = IngestResult::UnknownBin;
            let events = self.commit(now, vec![EventKind::Deliver { message: msg.clone(), result }])?;
            return Ok(IngestOutcome { result, ack: None, events });
        };
        let (result, tampered) = entry.classify(msg);
        let newest = entry.latest_seq.is_none_or(|l| msg.seq > l);
        self.stats.record(result);

        let mut events = Vec::new();
        if tampered {
            self.stats.tamper += 1;
            events.extend(self.commit(now, vec![EventKind::Tamper { bin_id: msg.bin_id.clone(), seq: msg.seq }])?);
        }
        // every delivery is logged; only ACCEPTED changes state
        events.extend(self.commit(now, vec![EventKind::Deliver { message: msg.clone(), result }])?);
        if result == IngestResult::Accepted && newest {
            events.extend(self.evaluate_bin(&msg.bin_id, now)?);
        }
        let ack = matches!(result, IngestResult::Accepted | IngestResult::Duplicate).then(|| AckMessage {
            bin_id: msg.bin_id.clone(),
            seq: msg.seq,
            received_at: now,
        });
        Ok(IngestOutcome { result, ack, events })
    }

    fn evaluate_bin(&mut self, bin_id: &str, now: Timestamp) -> Result<Vec<Event>, ApplyError> {
        let entry = &self.state.registry[bin_id];
        let active = self.state.active_causes(bin_id);
        let eval = evaluate_alerts(entry, &active, &self.policy, now);
        let mut kinds = Vec::new();
        if eval.rearm_threshold {
            kinds.push(EventKind::Rearm { bin_id: bin_id.to_owned() });
        }
        for cause in eval.resolve {
            if let Some(a) = self.state.active_alert(bin_id, cause) {
                kinds.push(EventKind::AlertStatus {
                    alert_id: a.alert_id.clone(),
                    status: AlertStatus::Resolved,
                    order_id: None,
                });
            }
        }
        let mut next = self.state.next_alert;
        for (cause, fill) in eval.raise {
            next += 1;
            kinds.push(EventKind::Alert {
                alert: AlertRecord {
                    alert_id: format!("A{next:06}"),
                    bin_id: bin_id.to_owned(),
                    created_at: now,
                    fill_at_alert: fill,
                    cause,
                    status: AlertStatus::Open,
                    order_id: None,
                    resolved_at: None,
                },
            });
        }
        self.commit(now, kinds)
    }

    /// Periodic housekeeping: staleness checks for every bin, then batch
    /// dispatch when enabled.
    pub fn tick(&mut self, now: Timestamp) -> Result<Vec<Event>, CenterError> {
        let mut events = Vec::new();
        let bins: Vec<String> = self.state.registry.keys().cloned().collect();
        for bin in bins {
            let entry = &self.state.registry[&bin];
            let active = self.state.active_causes(&bin);
            let heard = entry.last_heard_at.unwrap_or(entry.registered_at);
            let stale = now.saturating_sub(heard) > self.policy.stale_after_ms;
            if stale && !active.contains(&AlertCause::Stale) {
                let id = format!("A{:06}", self.state.next_alert + 1);
                events.extend(self.commit(
                    now,
                    vec![EventKind::Alert {
                        alert: AlertRecord {
                            alert_id: id,
                            bin_id: bin.clone(),
                            created_at: now,
                            fill_at_alert: None,
                            cause: AlertCause::Stale,
                            status: AlertStatus::Open,
                            order_id: None,
                            resolved_at: None,
                        },
                    }],
                )?);
            }
        }
        if self.policy.auto_dispatch {
            events.extend(self.dispatch(now)?);
        }
        Ok(events)
    }

    /// Runs the batch trigger once and creates any resulting orders.
    pub fn dispatch(&mut self, now: Timestamp) -> Result<Vec<Event>, CenterError> {
        let plan = plan_dispatch(self.state.alerts.values(), &self.state.registry, &self.state.trucks, &self.policy, now)?;
        let mut events = Vec::new();
        if let Some(reason) = plan.deferred {
            events.extend(self.commit(now, vec![EventKind::DispatchDeferred { reason, open_bins: plan.open_bins }])?);
        }
        for planned in plan.orders {
            events.extend(self.create_planned(planned, None, now)?);
        }
        Ok(events)
    }

    fn create_planned(
        &mut self,
        planned: PlannedOrder,
        idempotency_key: Option<String>,
        now: Timestamp,
    ) -> Result<Vec<Event>, ApplyError> {
        let order_id = format!("O{:06}", self.state.next_order + 1);
        let order = WorkOrder {
            order_id: order_id.clone(),
            truck_id: planned.truck_id,
            visits: planned.visits,
            planned_route_m: planned.tour.length_m,
            created_at: now,
            status: OrderStatus::Created,
            alert_ids: planned.alert_ids.clone(),
            idempotency_key,
        };
        let mut kinds = vec![
            EventKind::OrderCreated { order },
            EventKind::OrderStatus { order_id: order_id.clone(), status: OrderStatus::Assigned },
        ];
        for alert_id in planned.alert_ids {
            kinds.push(EventKind::AlertStatus {
                alert_id,
                status: AlertStatus::Dispatched,
                order_id: Some(order_id.clone()),
            });
        }
        self.commit(now, kinds)
    }

    fn route_for(&self, bin_ids: &[String], truck_id: &str) -> Result<(Tour, Vec<Stop>), CenterError> {
        let truck = self.state.trucks.get(truck_id).ok_or_else(|| CenterError::UnknownTruck(truck_id.to_owned()))?;
        if bin_ids.is_empty() {
            return Err(CenterError::EmptyOrder);
        }
        let unique: BTreeSet<&String> = bin_ids.iter().collect();
        let mut stops = Vec::with_capacity(unique.len());
        for id in unique {
            let entry = self.state.registry.get(id).ok_or_else(|| CenterError::UnknownBin(id.clone()))?;
            stops.push(Stop { bin_id: id.clone(), position: entry.position });
        }
        let tour = plan_route(&RoutingProblem::haversine(truck.depot, &stops)?)?;
        Ok((tour, stops))
    }

    /// What-if routing for a set of bins; creates nothing.
    pub fn preview(&self, bin_ids: &[String], truck_id: Option<&str>) -> Result<Tour, CenterError> {
        let truck_id = match truck_id {
            Some(t) => t.to_owned(),
            None => self.state.trucks.keys().next().cloned().ok_or_else(|| CenterError::UnknownTruck(String::new()))?,
        };
        Ok(self.route_for(bin_ids, &truck_id)?.0)
    }

    /// Operator-created order. Repeating an idempotency key returns the
    /// original order and applies nothing.
    pub fn create_order(&mut self, req: &OrderRequest, now: Timestamp) -> Result<(WorkOrder, Vec<Event>), CenterError> {
        if let Some(existing) = req.idempotency_key.as_ref().and_then(|k| self.state.idempotency.get(k)) {
            return Ok((self.state.orders[existing].clone(), Vec::new()));
        }
        let (tour, _) = self.route_for(&req.bin_ids, &req.truck_id)?;
        let mut alert_ids = Vec::new();
        let mut visits = Vec::new();
        for bin_id in &tour.stops {
            let open: Vec<&AlertRecord> = self
                .state
                .alerts
                .values()
                .filter(|a| &a.bin_id == bin_id && a.status == AlertStatus::Open && a.cause.is_dispatchable())
                .collect();
            if open.is_empty() && !req.override_alerts {
                return Err(CenterError::NoOpenAlert(bin_id.clone()));
            }
            visits.push(Visit {
                bin_id: bin_id.clone(),
                position: self.state.registry[bin_id].position,
                inspect: open.iter().any(|a| a.cause != AlertCause::Threshold),
            });
            alert_ids.extend(open.iter().map(|a| a.alert_id.clone()));
        }
        let planned = PlannedOrder { truck_id: req.truck_id.clone(), visits, tour, alert_ids };
        let events = self.create_planned(planned, req.idempotency_key.clone(), now)?;
        let order_id = match &events[0].kind {
            EventKind::OrderCreated { order } => order.order_id.clone(),
            _ => unreachable!("first event is the creation"),
        };
        Ok((self.state.orders[&order_id].clone(), events))
    }

    /// Confirms that `bin_id` was emptied under `order_id`, resolving the
    /// order's alerts for that bin.
    pub fn confirm_collect(&mut self, order_id: &str, bin_id: &str, now: Timestamp) -> Result<Vec<Event>, CenterError> {
        let order = self.state.orders.get(order_id).ok_or_else(|| CenterError::UnknownOrder(order_id.to_owned()))?;
        let kinds = order
            .alert_ids
            .iter()
            .filter(|id| {
                let a = &self.state.alerts[*id];
                a.bin_id == bin_id && a.status.is_active()
            })
            .map(|id| EventKind::AlertStatus { alert_id: id.clone(), status: AlertStatus::Resolved, order_id: None })
            .collect();
        Ok(self.commit(now, kinds)?)
    }

    /// Moves an order forward. Reaching DONE confirms collection of
    /// `collected` (every visit when `None`).
    pub fn set_order_status(
        &mut self,
        order_id: &str,
        status: OrderStatus,
        collected: Option<&[String]>,
        now: Timestamp,
    ) -> Result<Vec<Event>, CenterError> {
        let order = self.state.orders.get(order_id).ok_or_else(|| CenterError::UnknownOrder(order_id.to_owned()))?;
        if status <= order.status {
            return Err(CenterError::BadTransition { id: order_id.to_owned(), from: order.status, to: status });
        }
        let bins: Vec<String> = match collected {
            Some(b) => b.to_vec(),
            None => order.visits.iter().map(|v| v.bin_id.clone()).collect(),
        };
        let mut events = Vec::new();
        if status == OrderStatus::Done {
            for bin in &bins {
                events.extend(self.confirm_collect(order_id, bin, now)?);
            }
        }
        events.extend(self.commit(now, vec![EventKind::OrderStatus { order_id: order_id.to_owned(), status }])?);
        Ok(events)
    }

    pub fn forecast(&self, bin_id: &str, now: Timestamp) -> Result<Forecast, CenterError> {
        let entry = self.state.registry.get(bin_id).ok_or_else(|| CenterError::UnknownBin(bin_id.to_owned()))?;
        let history: Vec<_> = entry.history.iter().copied().collect();
        Ok(forecast_full_at(&history, self.policy.threshold, now))
    }
}
