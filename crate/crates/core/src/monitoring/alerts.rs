use std::collections::BTreeSet;

use crate::domain::{FillFraction, Timestamp};
use crate::sensing::VoteKind;

use super::model::{AlertCause, BinRegistryEntry};
use super::policy::MonitoringPolicy;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlertEvaluation {
    pub raise: Vec<(AlertCause, Option<FillFraction>)>,
    pub rearm_threshold: bool,
    pub resolve: Vec<AlertCause>,
}

impl AlertEvaluation {
    pub fn is_empty(&self) -> bool {
        self.raise.is_empty() && !self.rearm_threshold && self.resolve.is_empty()
    }
}

/// Decides which alerts a bin's latest state raises, given the causes that
/// already have an OPEN or DISPATCHED alert.
///
/// THRESHOLD fires once per fill cycle: it needs the bin to be armed, and
/// re-arms only when fill falls below `threshold - hysteresis`.
pub fn evaluate_alerts(
    entry: &BinRegistryEntry,
    active: &BTreeSet<AlertCause>,
    policy: &MonitoringPolicy,
    now: Timestamp,
) -> AlertEvaluation {
    let mut out = AlertEvaluation::default();
    let mut raise = |cause: AlertCause, fill: Option<FillFraction>| {
        if !active.contains(&cause) {
            out.raise.push((cause, fill));
        }
    };

    if let Some(fill) = entry.latest_fill {
        if entry.threshold_armed && fill.value() >= policy.threshold {
            raise(AlertCause::Threshold, Some(fill));
        }
    }
    match entry.latest_vote {
        Some(VoteKind::Disagreed) => raise(AlertCause::Disagree, entry.latest_fill),
        Some(VoteKind::DualFault) => raise(AlertCause::DualFault, None),
        _ => {}
    }
    if let Some(v) = entry.battery_v {
        if v <= policy.low_battery_v {
            raise(AlertCause::LowBattery, entry.latest_fill);
        }
    }
    let heard = entry.last_heard_at.unwrap_or(entry.registered_at);
    let stale = now.saturating_sub(heard) > policy.stale_after_ms;
    if stale {
        raise(AlertCause::Stale, None);
    }

    if let Some(fill) = entry.latest_fill {
        if !entry.threshold_armed && fill.value() < policy.threshold - policy.hysteresis {
            out.rearm_threshold = true;
        }
    }
    if active.contains(&AlertCause::Stale) && !stale {
        out.resolve.push(AlertCause::Stale);
    }
    if active.contains(&AlertCause::LowBattery) && entry.battery_v.is_some_and(|v| v > policy.battery_rearm_v) {
        out.resolve.push(AlertCause::LowBattery);
    }
    out
}
