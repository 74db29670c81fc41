//! Citizen-facing bin status: which bins are full, which are empty, where
//! they are, and the nearest one with room left.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FillFraction, Timestamp};
use crate::geo::{haversine_m, GeoCoordinate};
use crate::monitoring::{BinRegistryEntry, MonitoringPolicy, MonitoringState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BinState {
    Empty,
    Partial,
    Full,
    Unknown,
}

impl BinState {
    pub const ALL: [BinState; 4] = [BinState::Empty, BinState::Partial, BinState::Full, BinState::Unknown];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EMPTY" => Some(BinState::Empty),
            "PARTIAL" => Some(BinState::Partial),
            "FULL" => Some(BinState::Full),
            "UNKNOWN" => Some(BinState::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStatusView {
    pub bin_id: String,
    pub lat: f64,
    pub lon: f64,
    pub fill: Option<FillFraction>,
    pub state: BinState,
    pub last_heard_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("NOT_FOUND: zone {0:?}")]
    UnknownZone(String),
    #[error("k must be at least 1")]
    BadK,
}

/// Cutoffs and staleness used to classify bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusPolicy {
    pub empty_below: f64,
    pub full_at: f64,
    pub stale_after_ms: u64,
}

impl From<&MonitoringPolicy> for StatusPolicy {
    fn from(p: &MonitoringPolicy) -> Self {
        StatusPolicy { empty_below: p.empty_cutoff, full_at: p.threshold, stale_after_ms: p.stale_after_ms }
    }
}

impl Default for StatusPolicy {
    fn default() -> Self {
        StatusPolicy::from(&MonitoringPolicy::default())
    }
}

pub fn classify(fill: Option<FillFraction>, last_heard_at: Option<Timestamp>, policy: &StatusPolicy, now: Timestamp) -> BinState {
    let stale = last_heard_at.is_none_or(|t| now.saturating_sub(t) > policy.stale_after_ms);
    match fill {
        _ if stale => BinState::Unknown,
        None => BinState::Unknown,
        Some(f) if f.value() >= policy.full_at => BinState::Full,
        Some(f) if f.value() < policy.empty_below => BinState::Empty,
        Some(_) => BinState::Partial,
    }
}

pub fn view(entry: &BinRegistryEntry, policy: &StatusPolicy, now: Timestamp) -> BinStatusView {
    let state = classify(entry.latest_fill, entry.last_heard_at, policy, now);
    BinStatusView {
        bin_id: entry.bin_id.clone(),
        lat: entry.position.lat,
        lon: entry.position.lon,
        fill: if state == BinState::Unknown { None } else { entry.latest_fill },
        state,
        last_heard_at: entry.last_heard_at,
    }
}

/// All bins sorted by id, optionally filtered by state and zone.
pub fn list_bins(
    state: &MonitoringState,
    filter_state: Option<BinState>,
    zone: Option<&str>,
    policy: &StatusPolicy,
    now: Timestamp,
) -> Result<Vec<BinStatusView>, QueryError> {
    if let Some(z) = zone {
        if !state.zones.contains_key(z) {
            return Err(QueryError::UnknownZone(z.to_owned()));
        }
    }
    Ok(state
        .registry
        .values()
        .filter(|e| zone.is_none_or(|z| e.zone_id == z))
        .map(|e| view(e, policy, now))
        .filter(|v| filter_state.is_none_or(|s| v.state == s))
        .collect())
}

/// Up to `k` bins that are neither FULL nor UNKNOWN, nearest first; equal
/// distances sort by bin id.
pub fn nearest_available(
    state: &MonitoringState,
    from: GeoCoordinate,
    k: usize,
    policy: &StatusPolicy,
    now: Timestamp,
) -> Result<Vec<BinStatusView>, QueryError> {
    if k == 0 {
        return Err(QueryError::BadK);
    }
    let mut candidates: Vec<(f64, BinStatusView)> = state
        .registry
        .values()
        .map(|e| view(e, policy, now))
        .filter(|v| matches!(v.state, BinState::Empty | BinState::Partial))
        .map(|v| {
            let pos = GeoCoordinate { lat: v.lat, lon: v.lon };
            (haversine_m(from, pos), v)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.bin_id.cmp(&b.1.bin_id)));
    Ok(candidates.into_iter().take(k).map(|(_, v)| v).collect())
}
