//! On-disk state: `events.ndjson` (append-only) and `snapshot.json`
//! (replaced atomically).

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use binfleet_core::eventlog::{parse_log, write_event, write_header, LogError, LogErrorKind, LogHeader};
use binfleet_core::events::Event;
use binfleet_core::monitoring::MonitoringState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_FILE: &str = "events.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of log events (header excluded) folded into `state`.
    pub events_applied: u64,
    pub state_hash: String,
    pub state: MonitoringState,
}

impl Snapshot {
    pub fn read(path: &Path) -> Option<Snapshot> {
        let snap: Snapshot = serde_json::from_slice(&fs::read(path).ok()?).ok()?;
        (snap.state.state_hash() == snap.state_hash).then_some(snap)
    }
}

/// What was found in the data directory.
#[derive(Debug)]
pub struct Recovered {
    pub state: MonitoringState,
    pub header: LogHeader,
    /// True when the log did not exist and a fresh header was written.
    pub fresh: bool,
    /// Events taken from the snapshot rather than folded from the log.
    pub from_snapshot: u64,
    pub last_at: u64,
}

pub struct Store {
    dir: PathBuf,
    log: File,
    events: u64,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

impl Store {
    /// Opens or creates the data directory. An existing log is validated in
    /// full; a matching snapshot saves re-applying its prefix.
    pub fn open(dir: &Path, header: LogHeader) -> Result<(Store, Recovered), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join(LOG_FILE);
        let existing = match fs::read(&log_path) {
            Ok(b) if !b.is_empty() => Some(b),
            Ok(_) => None,
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&log_path)(e)),
        };

        let Some(bytes) = existing else {
            let mut log = File::create(&log_path).map_err(io_err(&log_path))?;
            write_header(&mut log, &header).map_err(io_err(&log_path))?;
            log.sync_data().map_err(io_err(&log_path))?;
            let store = Store { dir: dir.to_owned(), log, events: 0 };
            let rec = Recovered { state: MonitoringState::new(), header, fresh: true, from_snapshot: 0, last_at: 0 };
            return Ok((store, rec));
        };

        let log_err = |source| StoreError::Log { path: log_path.clone(), source };
        let (header, events) = parse_log(&bytes).map_err(log_err)?;
        let count = events.len() as u64;
        // a snapshot claiming more events than the log holds is stale or foreign
        let snapshot = Snapshot::read(&dir.join(SNAPSHOT_FILE)).filter(|s| s.events_applied <= count);
        let skip = snapshot.as_ref().map_or(0, |s| s.events_applied);
        let mut state = snapshot.map(|s| s.state).unwrap_or_default();
        for (i, event) in events.iter().enumerate().skip(skip as usize) {
            state
                .apply(event)
                .map_err(|e| log_err(LogError::new(LogErrorKind::Inconsistent, i + 2, e.to_string())))?;
        }
        let last_at = events.last().map_or(0, |e| e.at.0);
        let log = OpenOptions::new().append(true).open(&log_path).map_err(io_err(&log_path))?;
        let store = Store { dir: dir.to_owned(), log, events: count };
        Ok((store, Recovered { state, header, fresh: false, from_snapshot: skip, last_at }))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn events_written(&self) -> u64 {
        self.events
    }

    /// Appends a batch with a single write.
    pub fn append(&mut self, events: &[Event]) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            write_event(&mut buf, e).expect("writing to a Vec cannot fail");
        }
        let path = self.dir.join(LOG_FILE);
        self.log.write_all(&buf).map_err(io_err(&path))?;
        self.events += events.len() as u64;
        Ok(())
    }

    /// Writes `snapshot.json` via a temporary file and rename.
    pub fn snapshot(&mut self, state: &MonitoringState) -> Result<(), StoreError> {
        let log_path = self.dir.join(LOG_FILE);
        self.log.sync_data().map_err(io_err(&log_path))?;
        let snap = Snapshot { events_applied: self.events, state_hash: state.state_hash(), state: state.clone() };
        let tmp = self.dir.join("snapshot.json.tmp");
        let path = self.dir.join(SNAPSHOT_FILE);
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        serde_json::to_writer(&mut f, &snap).map_err(|e| io_err(&tmp)(e.into()))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }
}
