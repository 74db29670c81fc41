use crate::eventlog::{LogError, LogErrorKind, LogReader};
use crate::events::Event;

use super::model::MonitoringState;

/// Rebuilds monitoring state from a persisted log.
pub fn replay(log: &[u8]) -> Result<MonitoringState, LogError> {
    let mut state = MonitoringState::new();
    for item in LogReader::new(log)? {
        let (line, event) = item?;
        state.apply(&event).map_err(|e| LogError::new(LogErrorKind::Inconsistent, line, e.to_string()))?;
    }
    Ok(state)
}

/// Folds already-parsed events; `line` in errors is the 1-based index
/// among `events`.
pub fn replay_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<MonitoringState, LogError> {
    let mut state = MonitoringState::new();
    for (i, event) in events.into_iter().enumerate() {
        state.apply(event).map_err(|e| LogError::new(LogErrorKind::Inconsistent, i + 1, e.to_string()))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{to_bytes, LogHeader};

    #[test]
    fn empty_log_gives_empty_state() {
        let bytes = to_bytes(&LogHeader::new(0, ""), &[]);
        assert_eq!(replay(&bytes).unwrap(), MonitoringState::new());
    }
}
