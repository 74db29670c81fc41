//! `binfleet`: run simulations, replay logs, plan routes and serve the
//! monitoring center.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use binfleet_core::eventlog::{parse_log, write_log, LogError};
use binfleet_core::monitoring::{replay_events, AlertStatus};
use binfleet_core::report::RunReport;
use binfleet_core::routing::{brute_force_optimum, nearest_neighbor, two_opt, PlanProblem, RoutingError, Tour};
use binfleet_core::routing::DEFAULT_MAX_PASSES;
use binfleet_core::simulation::{apply_seed_override, run, ScenarioConfig, SimError};
use binfleet_service::{serve, Listeners, Options, Service, ServiceError, StoreError};
use clap::{Parser, Subcommand};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   internal error
  2   invalid scenario config (every violation is listed)
  3   I/O failure reading or writing files
  4   corrupt event log (the offending line is named)
  5   cannot bind a listen address
  6   TOO_LARGE: --oracle with more than 10 stops
  7   report.json does not match events.ndjson
  8   invalid route problem file
  64  bad command line usage";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Exit {
    Internal = 1,
    Config = 2,
    Io = 3,
    CorruptLog = 4,
    Bind = 5,
    TooLarge = 6,
    Mismatch = 7,
    BadProblem = 8,
    Usage = 64,
}

struct Failure {
    exit: Exit,
    message: String,
}

fn fail(exit: Exit, message: impl Into<String>) -> Failure {
    Failure { exit, message: message.into() }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "binfleet", version, about = "Smart waste bin fleet simulator and monitoring center", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario; writes events.ndjson and report.json to --out.
    /// BINFLEET_SEED overrides the config seed.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild state from an event log and print its summary.
    Replay {
        log: PathBuf,
        /// Print the recomputed report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the telemetry listener and HTTP API until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Telemetry listen address, e.g. 0.0.0.0:7070.
        #[arg(long)]
        telemetry: String,
        /// HTTP listen address, e.g. 0.0.0.0:8080.
        #[arg(long)]
        http: String,
        #[arg(long, default_value = "binfleet-data")]
        data_dir: PathBuf,
        /// Bearer token for operator routes.
        #[arg(long, env = "BINFLEET_OPERATOR_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Housekeeping and dispatch period; defaults to the policy's
        /// dispatch interval.
        #[arg(long)]
        tick_ms: Option<u64>,
    },
    /// Plan a collection tour: nearest neighbour, then 2-opt.
    Plan {
        problem: PathBuf,
        /// Also compute the exact optimum (at most 10 stops).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        json: bool,
    },
    /// Check that DIR/report.json is what DIR/events.ndjson summarizes.
    VerifyReport { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Exit::Usage as u8) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Replay { log, json } => replay(&log, json),
        Command::Serve { config, telemetry, http, data_dir, token, tick_ms } => {
            serve_cmd(&config, &telemetry, &http, data_dir, token, tick_ms)
        }
        Command::Plan { problem, oracle, json } => plan(&problem, oracle, json),
        Command::VerifyReport { dir } => verify_report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("binfleet: {}", f.message);
            ExitCode::from(f.exit as u8)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(io(path))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let bytes = read(path)?;
    let mut cfg = ScenarioConfig::from_json(&bytes).map_err(|e| fail(Exit::Config, format!("{}: {e}", path.display())))?;
    apply_seed_override(&mut cfg).map_err(|e| fail(Exit::Config, e))?;
    Ok(cfg)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| fail(Exit::Io, format!("{}: {e}", path.display()))
}

fn corrupt(path: &Path, e: LogError) -> Failure {
    fail(Exit::CorruptLog, format!("{}: {e}", path.display()))
}

fn simulate(config: &Path, out: &Path) -> CmdResult {
    let cfg = load_config(config)?;
    let output = run(&cfg).map_err(|e| match e {
        SimError::Config(c) => fail(Exit::Config, c.to_string()),
        other => fail(Exit::Internal, format!("simulation failed: {other}")),
    })?;
    fs::create_dir_all(out).map_err(io(out))?;

    let log_path = out.join("events.ndjson");
    let mut w = BufWriter::new(fs::File::create(&log_path).map_err(io(&log_path))?);
    write_log(&mut w, &output.header, &output.events).map_err(io(&log_path))?;
    w.flush().map_err(io(&log_path))?;

    let report = RunReport::from_events(&output.events);
    let report_path = out.join("report.json");
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    fs::write(&report_path, json).map_err(io(&report_path))?;

    print_report(&report);
    println!("{:<28}{}", "state hash", output.center.state().state_hash());
    println!("wrote {} and {}", log_path.display(), report_path.display());
    Ok(())
}

fn replay(path: &Path, json: bool) -> CmdResult {
    let bytes = read(path)?;
    let (header, events) = parse_log(&bytes).map_err(|e| corrupt(path, e))?;
    let state = replay_events(&events).map_err(|mut e| {
        e.line += 1; // header
        corrupt(path, e)
    })?;
    let report = RunReport::from_events(&events);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    print_report(&report);
    let open = state.alerts.values().filter(|a| a.status == AlertStatus::Open).count();
    let dispatched = state.alerts.values().filter(|a| a.status == AlertStatus::Dispatched).count();
    println!("{:<28}{}", "events", events.len());
    println!("{:<28}{}", "config hash", header.config_hash);
    println!("{:<28}{} bins, {} trucks, {} zones", "registry", state.registry.len(), state.trucks.len(), state.zones.len());
    println!("{:<28}{open} open, {dispatched} dispatched", "active alerts");
    println!("{:<28}{}", "state hash", state.state_hash());
    Ok(())
}

fn print_report(r: &RunReport) {
    let t = &r.totals;
    let m = &t.messages;
    let row = |k: &str, v: String| println!("{k:<28}{v}");
    row("scenario", format!("{} (seed {})", r.scenario_id, r.seed));
    row("deposits", format!("{} ({:.1} L)", t.deposits, t.deposited_l));
    row("collections", format!("{} ({:.1} L)", t.collections, t.collected_l));
    row("overflows", format!("{} ({:.1} L)", t.overflows, t.overflow_l));
    row("left in bins", format!("{:.1} L", t.residual_l));
    for (cause, n) in &t.alerts_by_cause {
        row(&format!("alerts {cause}"), n.to_string());
    }
    row("orders", format!("{} created, {} done", t.orders_created, t.orders_done));
    row("low battery", t.low_battery.to_string());
    row("truck distance", format!("{:.2} km", t.truck_distance_m / 1000.0));
    row(
        "messages",
        format!(
            "{} sent, {} retransmitted, {} lost, {} duplicated",
            m.sent, m.retransmitted, m.lost, m.duplicated
        ),
    );
    row(
        "deliveries",
        format!(
            "{} delivered, {} accepted, {} duplicates dropped, {} acked, {} degraded",
            m.delivered, m.accepted, m.duplicates_dropped, m.acks_received, m.link_degraded
        ),
    );
    let hours = |ms: f64| ms / 3_600_000.0;
    match r.mean_alert_to_collection_ms {
        Some(mean) => row(
            "alert to collection",
            format!(
                "mean {:.2} h over {} alerts (bound {:.2} h)",
                hours(mean),
                r.threshold_alerts_collected,
                hours(r.latency_bound_ms as f64)
            ),
        ),
        None => row("alert to collection", "no threshold alert was collected".into()),
    }
    let fullest = r.max_fill_by_bin.iter().max_by(|a, b| a.1.total_cmp(b.1));
    if let Some((bin, fill)) = fullest {
        row("fullest bin", format!("{bin} at {:.1}%", fill * 100.0));
    }
}

fn serve_cmd(
    config: &Path,
    telemetry: &str,
    http: &str,
    data_dir: PathBuf,
    token: Option<String>,
    tick_ms: Option<u64>,
) -> CmdResult {
    let cfg = load_config(config)?;
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let tick = Duration::from_millis(tick_ms.unwrap_or(cfg.policies.monitoring.dispatch_interval_ms).max(1));
    let svc = Service::open(&cfg, Options { operator_token: token, ..Options::new(&data_dir) }).map_err(service_failure)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| fail(Exit::Io, format!("starting runtime: {e}")))?;
    rt.block_on(async {
        let listeners = Listeners::bind(telemetry, http).await.map_err(service_failure)?;
        let (t, h) = listeners.addrs().map_err(|e| fail(Exit::Io, e.to_string()))?;
        println!("listening telemetry={t} http={h} data_dir={}", data_dir.display());
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(svc, listeners, tick, shutdown).await.map_err(service_failure)?;
        println!("snapshot written to {}", data_dir.join(binfleet_service::SNAPSHOT_FILE).display());
        Ok(())
    })
}

fn service_failure(e: ServiceError) -> Failure {
    let exit = match &e {
        ServiceError::Bind { .. } => Exit::Bind,
        ServiceError::Store(StoreError::Log { .. }) => Exit::CorruptLog,
        _ => Exit::Io,
    };
    fail(exit, e.to_string())
}

fn plan(path: &Path, oracle: bool, json: bool) -> CmdResult {
    let bytes = read(path)?;
    let problem =
        PlanProblem::from_json(&bytes).map_err(|e| fail(Exit::BadProblem, format!("{}: {e}", path.display())))?;
    let routing = |e: RoutingError| match e {
        RoutingError::TooLarge { .. } => fail(Exit::TooLarge, e.to_string()),
        other => fail(Exit::BadProblem, other.to_string()),
    };
    let nn = nearest_neighbor(&problem).map_err(routing)?;
    let improved = two_opt(&nn, &problem, DEFAULT_MAX_PASSES).map_err(routing)?;
    let optimum = if oracle { Some(brute_force_optimum(&problem).map_err(routing)?) } else { None };
    if json {
        let v = serde_json::json!({"nearest_neighbor": nn, "two_opt": improved, "optimum": optimum});
        println!("{}", serde_json::to_string_pretty(&v).expect("tours serialize"));
        return Ok(());
    }
    let show = |name: &str, t: &Tour| println!("{name:<18}{:>12.1} m  DEPOT -> {} -> DEPOT", t.length_m, t.stops.join(" -> "));
    show("nearest neighbour", &nn);
    show("2-opt", &improved);
    if let Some(o) = &optimum {
        show("optimum", o);
        println!("{:<18}{:>11.3}%", "2-opt gap", (improved.length_m / o.length_m - 1.0) * 100.0);
    }
    Ok(())
}

fn verify_report(dir: &Path) -> CmdResult {
    let log_path = dir.join("events.ndjson");
    let report_path = dir.join("report.json");
    let bytes = read(&log_path)?;
    let (_, events) = parse_log(&bytes).map_err(|e| corrupt(&log_path, e))?;
    let stored: RunReport = serde_json::from_slice(&read(&report_path)?)
        .map_err(|e| fail(Exit::Mismatch, format!("{}: not a report: {e}", report_path.display())))?;
    let recomputed = RunReport::from_events(&events);
    if recomputed.matches(&stored) {
        println!("report.json matches events.ndjson ({} events)", events.len());
        return Ok(());
    }
    let a = serde_json::to_value(&stored).expect("report serializes");
    let b = serde_json::to_value(&recomputed).expect("report serializes");
    let mut diffs = Vec::new();
    diff("", &a, &b, &mut diffs);
    Err(fail(Exit::Mismatch, format!("report.json disagrees with the log:\n  {}", diffs.join("\n  "))))
}

fn diff(path: &str, stored: &serde_json::Value, log: &serde_json::Value, out: &mut Vec<String>) {
    use serde_json::Value;
    match (stored, log) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                diff(&p, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
            }
        }
        _ if stored != log => out.push(format!("{path}: report has {stored}, log gives {log}")),
        _ => {}
    }
}
