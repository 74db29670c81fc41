//! The monitoring center as a long-running service.
//!
//! Bins stream NDJSON readings over TCP and get one ack (or error) line per
//! reading back. Operators and the public query over HTTP. All mutation goes
//! through one lock that also appends the resulting events to
//! `events.ndjson`, so the log order is the apply order.

pub mod http;
pub mod store;
pub mod telemetry;

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Duration;

use binfleet_core::domain::Timestamp;
use binfleet_core::eventlog::LogHeader;
use binfleet_core::events::Event;
use binfleet_core::monitoring::{ApplyError, CenterError, MonitoringCenter};
use binfleet_core::simulation::ScenarioConfig;
use binfleet_core::telemetry::{decode_line, encode_ack, WireLine};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

pub use store::{Snapshot, Store, StoreError, LOG_FILE, SNAPSHOT_FILE};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("registering config: {0}")]
    Register(#[from] CommandError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A failed command. State changes made before a store failure stay in
/// memory but the error is surfaced so the operator knows the log is behind.
#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<ApplyError> for CommandError {
    fn from(e: ApplyError) -> Self {
        CommandError::Center(e.into())
    }
}

pub struct Options {
    pub data_dir: PathBuf,
    /// Bearer token required on operator routes; `None` leaves them open.
    pub operator_token: Option<String>,
    pub clock: Clock,
}

impl Options {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Options { data_dir: data_dir.into(), operator_token: None, clock: Arc::new(Timestamp::now) }
    }
}

struct Inner {
    center: MonitoringCenter,
    store: Store,
    /// Never hand out a time earlier than the last logged event.
    last_at: u64,
}

#[derive(Clone)]
pub struct Service {
    inner: Arc<RwLock<Inner>>,
    clock: Clock,
    token: Option<Arc<str>>,
}

impl Service {
    /// Recovers from the data directory, or starts a new log and registers
    /// the config's zones, bins and trucks.
    pub fn open(config: &ScenarioConfig, opts: Options) -> Result<Service, ServiceError> {
        let header = LogHeader::new(config.seed, config.config_hash());
        let (store, rec) = Store::open(&opts.data_dir, header.clone())?;
        if !rec.fresh && rec.header.config_hash != header.config_hash {
            tracing::warn!("log was written under a different config; the log wins");
        }
        if rec.from_snapshot > 0 {
            tracing::info!(events = rec.from_snapshot, "resumed from snapshot");
        }
        let center = MonitoringCenter::from_state(rec.state, config.policies.monitoring);
        let svc = Service {
            inner: Arc::new(RwLock::new(Inner { center, store, last_at: rec.last_at })),
            clock: opts.clock,
            token: opts.operator_token.map(Into::into),
        };
        if rec.fresh {
            let bins: Vec<_> = config.bins.iter().map(|b| (b.id.clone(), b.position)).collect();
            let trucks: Vec<_> = config.trucks.iter().map(|t| t.info()).collect();
            let zones = config.effective_zones();
            svc.command(|c, now| c.register(&zones, &bins, &trucks, now).map(|ev| ((), ev)))?;
        }
        Ok(svc)
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    fn read_guard(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn operator_token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    /// Runs a mutation under the writer lock and appends what it applied.
    pub fn command<T, E>(
        &self,
        f: impl FnOnce(&mut MonitoringCenter, Timestamp) -> Result<(T, Vec<Event>), E>,
    ) -> Result<T, CommandError>
    where
        CommandError: From<E>,
    {
        let mut g = self.write();
        let now = Timestamp((self.clock)().0.max(g.last_at));
        let (out, events) = f(&mut g.center, now)?;
        if let Some(last) = events.last() {
            g.last_at = last.at.0;
        }
        g.store.append(&events)?;
        Ok(out)
    }

    /// A read against one consistent state.
    pub fn read<T>(&self, f: impl FnOnce(&MonitoringCenter, Timestamp) -> T) -> T {
        let g = self.read_guard();
        let now = Timestamp((self.clock)().0.max(g.last_at));
        f(&g.center, now)
    }

    pub fn state_hash(&self) -> String {
        self.read(|c, _| c.state().state_hash())
    }

    /// Handles one telemetry line and returns the reply line: an ack, or an
    /// error object naming a category. Blank lines get no reply.
    pub fn handle_line(&self, line: &[u8]) -> Vec<u8> {
        if line.iter().all(u8::is_ascii_whitespace) {
            return Vec::new();
        }
        let msg = match decode_line(line) {
            Ok(WireLine::Reading(m)) => m,
            Ok(WireLine::Ack(_)) => return error_line("UNEXPECTED", "acks flow from the center to bins"),
            Err(e) => return error_line(&e.category().to_string(), &e.to_string()),
        };
        match self.command(|c, now| c.ingest(&msg, now).map(|o| ((o.result, o.ack), o.events))) {
            Ok((_, Some(ack))) => encode_ack(&ack),
            Ok((result, None)) => error_line(&result.to_string(), &format!("bin {:?} seq {}", msg.bin_id, msg.seq)),
            Err(e) => {
                tracing::error!("ingest failed: {e}");
                error_line("INTERNAL", &e.to_string())
            }
        }
    }

    /// Staleness checks and batch dispatch.
    pub fn tick(&self) -> Result<(), CommandError> {
        self.command(|c, now| c.tick(now).map(|ev| ((), ev)))
    }

    /// Writes `snapshot.json` for the current state.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut g = self.write();
        let Inner { center, store, .. } = &mut *g;
        store.snapshot(center.state())
    }

    pub fn events_written(&self) -> u64 {
        self.read_guard().store.events_written()
    }
}

pub(crate) fn error_line(category: &str, detail: &str) -> Vec<u8> {
    let mut out = serde_json::to_vec(&json!({"type": "error", "category": category, "detail": detail}))
        .expect("json value serializes");
    out.push(b'\n');
    out
}

pub struct Listeners {
    pub telemetry: TcpListener,
    pub http: TcpListener,
}

impl Listeners {
    pub async fn bind(telemetry: &str, http: &str) -> Result<Listeners, ServiceError> {
        let bind = |addr: &str| {
            let addr = addr.to_owned();
            async move { TcpListener::bind(&addr).await.map_err(|source| ServiceError::Bind { addr, source }) }
        };
        Ok(Listeners { telemetry: bind(telemetry).await?, http: bind(http).await? })
    }

    pub fn addrs(&self) -> io::Result<(SocketAddr, SocketAddr)> {
        Ok((self.telemetry.local_addr()?, self.http.local_addr()?))
    }
}

/// Serves until `shutdown` resolves, then writes a snapshot.
pub async fn serve(
    svc: Service,
    listeners: Listeners,
    tick_every: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let telemetry = tokio::spawn(telemetry::accept_loop(listeners.telemetry, svc.clone()));
    let ticker = {
        let svc = svc.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(tick_every);
            every.tick().await;
            loop {
                every.tick().await;
                if let Err(e) = svc.tick() {
                    tracing::error!("tick failed: {e}");
                }
            }
        })
    };
    let result = axum::serve(listeners.http, http::router(svc.clone())).with_graceful_shutdown(shutdown).await;
    telemetry.abort();
    ticker.abort();
    svc.snapshot()?;
    result.map_err(ServiceError::Io)
}
