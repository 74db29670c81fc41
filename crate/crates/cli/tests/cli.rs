use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use binfleet_core::domain::{FillFraction, Timestamp};
use binfleet_core::geo::GeoCoordinate;
use binfleet_core::monitoring::replay;
use binfleet_core::report::RunReport;
use binfleet_core::sensing::VoteKind;
use binfleet_core::telemetry::{encode, TelemetryMessage, VoteSummary};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binfleet"))
}

fn run(args: &[&str]) -> Output {
    bin().env_remove("BINFLEET_SEED").args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn minimal_config() -> Value {
    json!({
        "scenario_id": "minimal",
        "seed": 3,
        "duration_ms": 2 * 86_400_000u64,
        "bins": [
            {"id": "A", "position": {"lat": -26.20, "lon": 28.04}, "geometry": {"depth_cm": 100, "capacity_l": 240},
             "arrival_rate_per_day": 20, "volume": {"mu": 2.0, "sigma": 0.5}},
            {"id": "B", "position": {"lat": -26.21, "lon": 28.05}, "geometry": {"depth_cm": 100, "capacity_l": 240},
             "arrival_rate_per_day": 10, "volume": {"mu": 2.0, "sigma": 0.5}}
        ],
        "trucks": [{"id": "T1", "capacity_l": 2000, "speed_kmh": 30, "depot": {"lat": -26.19, "lon": 28.03}}]
    })
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn simulate(dir: &Path, cfg: &Value, out: &str) -> (Output, PathBuf) {
    let c = write_json(dir, "config.json", cfg);
    let out = dir.join(out);
    (run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()]), out)
}

#[test]
fn simulate_writes_both_files_deterministically() {
    let d = tempfile::tempdir().unwrap();
    let (o, a) = simulate(d.path(), &minimal_config(), "a");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, b) = simulate(d.path(), &minimal_config(), "b");
    let log_a = std::fs::read(a.join("events.ndjson")).unwrap();
    assert_eq!(log_a, std::fs::read(b.join("events.ndjson")).unwrap());
    assert!(a.join("report.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("overflows"));
}

#[test]
fn duplicate_bin_id_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = minimal_config();
    cfg["bins"][1]["id"] = json!("A");
    cfg["trucks"][0]["speed_kmh"] = json!(0);
    let (o, out) = simulate(d.path(), &cfg, "out");
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("duplicate bin id \"A\""), "{err}");
    // every violation, not just the first
    assert!(err.contains("speed"), "{err}");
    assert!(!out.join("events.ndjson").exists());
}

#[test]
fn unreadable_config_is_io() {
    let o = run(&["simulate", "--config", "/nonexistent/config.json", "--out", "/tmp/x"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn seed_override_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let c = write_json(d.path(), "config.json", &minimal_config());
    let out = d.path().join("out");
    let args = ["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = bin().env("BINFLEET_SEED", "77").args(args).output().unwrap();
    assert_eq!(code(&o), 0);
    let log = std::fs::read_to_string(out.join("events.ndjson")).unwrap();
    let header: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(header["seed"], 77);
    let o = bin().env("BINFLEET_SEED", "seventy").args(args).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BINFLEET_SEED"));
}

#[test]
fn replay_totals_equal_report() {
    let d = tempfile::tempdir().unwrap();
    let (_, out) = simulate(d.path(), &minimal_config(), "out");
    let log = out.join("events.ndjson");
    let o = run(&["replay", "--json", log.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let replayed: RunReport = serde_json::from_slice(&o.stdout).unwrap();
    let stored: RunReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(replayed.matches(&stored));
    assert!(stored.conserves_volume(1e-6));

    let o = run(&["replay", log.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    let hash = replay(&std::fs::read(&log).unwrap()).unwrap().state_hash();
    assert!(text.contains(&hash));
}

#[test]
fn corrupt_logs_name_the_line() {
    let d = tempfile::tempdir().unwrap();
    let (_, out) = simulate(d.path(), &minimal_config(), "out");
    let mut bytes = std::fs::read(out.join("events.ndjson")).unwrap();
    let lines = bytes.iter().filter(|&&b| b == b'\n').count();
    bytes.pop();
    let truncated = write_bytes(d.path(), "truncated.ndjson", &bytes);
    let o = run(&["replay", truncated.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains(&format!("TRUNCATED at line {lines}")), "{}", stderr(&o));

    let empty = write_bytes(d.path(), "empty.ndjson", b"");
    let o = run(&["replay", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("MISSING_HEADER"));

    let mut garbled = std::fs::read(out.join("events.ndjson")).unwrap();
    let third = garbled.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0 + 1;
    garbled.insert(third, b'#');
    let garbled = write_bytes(d.path(), "garbled.ndjson", &garbled);
    let o = run(&["replay", garbled.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("MALFORMED at line 3"), "{}", stderr(&o));
}

fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn verify_report_catches_edits() {
    let d = tempfile::tempdir().unwrap();
    let (_, out) = simulate(d.path(), &minimal_config(), "out");
    let o = run(&["verify-report", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let path = out.join("report.json");
    let mut report: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    report["totals"]["overflows"] = json!(report["totals"]["overflows"].as_u64().unwrap() + 1);
    std::fs::write(&path, report.to_string()).unwrap();
    let o = run(&["verify-report", out.to_str().unwrap()]);
    assert_eq!(code(&o), 7);
    assert!(stderr(&o).contains("totals.overflows"), "{}", stderr(&o));
}

fn plan_problem(n: usize) -> Value {
    let stops: Vec<Value> = (0..n)
        .map(|i| {
            let a = i as f64 * 2.4;
            json!({"bin_id": format!("S{i:02}"), "position": {"lat": -26.2 + 0.01 * a.sin(), "lon": 28.0 + 0.013 * a.cos()}})
        })
        .collect();
    json!({"depot": {"lat": -26.2, "lon": 28.0}, "stops": stops})
}

#[test]
fn plan_orders_the_three_tours() {
    let d = tempfile::tempdir().unwrap();
    let p = write_json(d.path(), "p.json", &plan_problem(8));
    let o = run(&["plan", "--oracle", "--json", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let len = |k: &str| v[k]["length_m"].as_f64().unwrap();
    assert!(len("optimum") <= len("two_opt") + 1e-9);
    assert!(len("two_opt") <= len("nearest_neighbor") + 1e-9);

    let o = run(&["plan", p.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2-opt"));
}

#[test]
fn plan_failures() {
    let d = tempfile::tempdir().unwrap();
    let big = write_json(d.path(), "big.json", &plan_problem(11));
    let o = run(&["plan", "--oracle", big.to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    assert!(stderr(&o).contains("TOO_LARGE"));
    // without the oracle 11 stops is fine
    assert_eq!(code(&run(&["plan", big.to_str().unwrap()])), 0);

    let bad = write_json(d.path(), "bad.json", &json!({"depot": {"lat": 0, "lon": 0}}));
    assert_eq!(code(&run(&["plan", bad.to_str().unwrap()])), 8);
    let empty = write_json(d.path(), "empty.json", &json!({"depot": {"lat": 0, "lon": 0}, "stops": []}));
    assert_eq!(code(&run(&["plan", empty.to_str().unwrap()])), 8);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&run(&["simulate"])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for c in ["0 ", "1 ", "2 ", "3 ", "4 ", "5 ", "6 ", "7 ", "8 ", "64 "] {
        assert!(text.lines().any(|l| l.trim_start().starts_with(c)), "exit code {c} undocumented");
    }
}

fn http_get(addr: &str, path: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp[9..12].parse().unwrap();
    let body = resp.split("\r\n\r\n").nth(1).unwrap_or("");
    (status, serde_json::from_str(body).unwrap_or(Value::Null))
}

fn reading(bin_id: &str, lat: f64, lon: f64, seq: u64, fill: f64) -> Vec<u8> {
    encode(&TelemetryMessage {
        bin_id: bin_id.into(),
        seq,
        sent_at: Timestamp::now(),
        position: GeoCoordinate::new(lat, lon).unwrap(),
        sensor_a_cm: Some(100.0 * (1.0 - fill) + 1.0),
        sensor_b_cm: Some(100.0 * (1.0 - fill) + 1.0),
        vote: VoteSummary { kind: VoteKind::Agreed, fill: Some(FillFraction::new(fill).unwrap()) },
        battery_v: 8.9,
    })
}

#[test]
fn serve_alerts_snapshot_and_port_conflict() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_json(d.path(), "config.json", &minimal_config());
    let data = d.path().join("data");
    let mut child = bin()
        .args(["serve", "--config", cfg.to_str().unwrap(), "--telemetry", "127.0.0.1:0", "--http", "127.0.0.1:0"])
        .args(["--data-dir", data.to_str().unwrap(), "--tick-ms", "3600000"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut out = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    out.read_line(&mut line).unwrap();
    let field = |k: &str| line.split_whitespace().find_map(|w| w.strip_prefix(k)).unwrap().to_owned();
    let (tel, http) = (field("telemetry="), field("http="));

    let mut s = TcpStream::connect(&tel).unwrap();
    let mut replies = BufReader::new(s.try_clone().unwrap());
    for (seq, fill) in [(1, 0.3), (2, 0.75)] {
        s.write_all(&reading("A", -26.20, 28.04, seq, fill)).unwrap();
        let mut r = String::new();
        replies.read_line(&mut r).unwrap();
        assert!(r.contains("\"ack\""), "{r}");
    }
    drop(s);

    let (status, alerts) = http_get(&http, "/alerts?status=OPEN");
    assert_eq!(status, 200);
    assert_eq!(alerts[0]["bin_id"], "A");
    assert_eq!(alerts[0]["cause"], "THRESHOLD");

    // same telemetry port again
    let second = bin()
        .args(["serve", "--config", cfg.to_str().unwrap(), "--telemetry", &tel, "--http", "127.0.0.1:0"])
        .args(["--data-dir", d.path().join("other").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&second), 5, "{}", stderr(&second));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let snap: Value = serde_json::from_slice(&std::fs::read(data.join("snapshot.json")).unwrap()).unwrap();
    let replayed = replay(&std::fs::read(data.join("events.ndjson")).unwrap()).unwrap();
    assert_eq!(snap["state_hash"], json!(replayed.state_hash()));
    assert_eq!(replayed.alerts.len(), 1);
}
