use serde::{Deserialize, Serialize};

use crate::domain::Timestamp;

use super::model::FillSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Forecast {
    /// The fitted line reaches the threshold at `at`.
    FullAt { at: Timestamp, slope_per_day: f64 },
    /// The latest sample is already at or above the threshold.
    AlreadyFull { at: Timestamp },
    None { reason: NoForecast },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NoForecast {
    InsufficientData,
    NotRising,
}

/// Least-squares line through `(time, fill)`: returns `(slope per ms,
/// intercept at time origin)`, with time measured from the first sample.
pub fn fit_line(history: &[FillSample]) -> Option<(f64, f64)> {
    if history.len() < 2 {
        return None;
    }
    let origin = history[0].at.epoch_ms();
    let n = history.len() as f64;
    let xs = history.iter().map(|s| (s.at.epoch_ms() as f64) - origin as f64);
    let mean_x = xs.clone().sum::<f64>() / n;
    let mean_y = history.iter().map(|s| s.fill).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, s) in xs.zip(history) {
        let dx = x - mean_x;
        sxy += dx * (s.fill - mean_y);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, mean_y - slope * mean_x))
}

/// Predicts when a bin reaches `threshold` by extrapolating its fill history.
pub fn forecast_full_at(history: &[FillSample], threshold: f64, now: Timestamp) -> Forecast {
    if history.len() < 2 {
        return Forecast::None { reason: NoForecast::InsufficientData };
    }
    if history.last().is_some_and(|s| s.fill >= threshold) {
        return Forecast::AlreadyFull { at: now };
    }
    let Some((slope, intercept)) = fit_line(history) else {
        // every sample at the same instant
        return Forecast::None { reason: NoForecast::InsufficientData };
    };
    if slope <= 0.0 {
        return Forecast::None { reason: NoForecast::NotRising };
    }
    let offset_ms = (threshold - intercept) / slope;
    let at = history[0].at.epoch_ms() as f64 + offset_ms;
    Forecast::FullAt { at: Timestamp(at.round().max(0.0) as u64), slope_per_day: slope * crate::domain::MS_PER_DAY as f64 }
}
