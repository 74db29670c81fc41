//! Newline-delimited JSON framing for bin uplink readings and center acks.
//!
//! ```text
//! {"type":"reading","bin_id":s,"seq":u,"sent_at":u,"lat":f,"lon":f,"sensor_a_cm":f|null,
//!  "sensor_b_cm":f|null,"vote_kind":s,"vote_fill":f|null,"battery_v":f}\n
//! {"type":"ack","bin_id":s,"seq":u,"received_at":u}\n
//! ```
//!
//! Decoding never panics: any byte sequence maps to a message or to a
//! [`DecodeError`] in one of three categories.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{FillFraction, Timestamp};
use crate::geo::GeoCoordinate;
use crate::sensing::{Reading, VoteKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Malformed,
    MissingField,
    Range,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Malformed => "MALFORMED",
            ErrorCategory::MissingField => "MISSING_FIELD",
            ErrorCategory::Range => "RANGE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("MALFORMED: {0}")]
    Malformed(String),
    #[error("MISSING_FIELD: \"{0}\"")]
    MissingField(&'static str),
    #[error("RANGE: field \"{field}\": {reason}")]
    Range { field: &'static str, reason: String },
}

impl DecodeError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            DecodeError::Malformed(_) => ErrorCategory::Malformed,
            DecodeError::MissingField(_) => ErrorCategory::MissingField,
            DecodeError::Range { .. } => ErrorCategory::Range,
        }
    }
}

/// Edge vote summary carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct VoteSummary {
    pub kind: VoteKind,
    pub fill: Option<FillFraction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TelemetryMessage {
    pub bin_id: String,
    pub seq: u64,
    pub sent_at: Timestamp,
    pub position: GeoCoordinate,
    pub sensor_a_cm: Reading,
    pub sensor_b_cm: Reading,
    pub vote: VoteSummary,
    pub battery_v: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct AckMessage {
    pub bin_id: String,
    pub seq: u64,
    pub received_at: Timestamp,
}

/// Any line that may appear on the telemetry socket.
#[derive(Debug, Clone, PartialEq)]
pub enum WireLine {
    Reading(TelemetryMessage),
    Ack(AckMessage),
}

#[derive(Serialize)]
struct ReadingWire<'a> {
    #[serde(rename = "type")]
    ty: &'static str,
    bin_id: &'a str,
    seq: u64,
    sent_at: u64,
    lat: f64,
    lon: f64,
    sensor_a_cm: Option<f64>,
    sensor_b_cm: Option<f64>,
    vote_kind: &'static str,
    vote_fill: Option<f64>,
    battery_v: f64,
}

#[derive(Serialize)]
struct AckWire<'a> {
    #[serde(rename = "type")]
    ty: &'static str,
    bin_id: &'a str,
    seq: u64,
    received_at: u64,
}

impl TelemetryMessage {
    /// Checks the invariants a decoded line must also satisfy.
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.bin_id.is_empty() {
            return Err(range("bin_id", "empty"));
        }
        for (field, r) in [("sensor_a_cm", self.sensor_a_cm), ("sensor_b_cm", self.sensor_b_cm)] {
            if let Some(d) = r {
                if !d.is_finite() || d < 0.0 {
                    return Err(range(field, format!("distance {d} must be finite and >= 0")));
                }
            }
        }
        match (self.vote.kind, self.vote.fill) {
            (VoteKind::DualFault, Some(_)) => return Err(range("vote_fill", "must be null for DUAL_FAULT")),
            (k, None) if k != VoteKind::DualFault => {
                return Err(range("vote_fill", format!("required for {}", k.as_str())))
            }
            _ => {}
        }
        if !self.battery_v.is_finite() || self.battery_v < 0.0 {
            return Err(range("battery_v", format!("{} must be >= 0", self.battery_v)));
        }
        Ok(())
    }
}

pub fn encode(msg: &TelemetryMessage) -> Vec<u8> {
    let wire = ReadingWire {
        ty: "reading",
        bin_id: &msg.bin_id,
        seq: msg.seq,
        sent_at: msg.sent_at.epoch_ms(),
        lat: msg.position.lat,
        lon: msg.position.lon,
        sensor_a_cm: msg.sensor_a_cm,
        sensor_b_cm: msg.sensor_b_cm,
        vote_kind: msg.vote.kind.as_str(),
        vote_fill: msg.vote.fill.map(FillFraction::value),
        battery_v: msg.battery_v,
    };
    to_line(&wire)
}

pub fn encode_ack(ack: &AckMessage) -> Vec<u8> {
    to_line(&AckWire { ty: "ack", bin_id: &ack.bin_id, seq: ack.seq, received_at: ack.received_at.epoch_ms() })
}

fn to_line<T: Serialize>(v: &T) -> Vec<u8> {
    // serializing plain structs of numbers and strings cannot fail
    let mut out = serde_json::to_vec(v).expect("wire struct serializes");
    out.push(b'\n');
    out
}

/// Decodes one reading line. A single trailing `\n` (or `\r\n`) is allowed.
pub fn decode(line: &[u8]) -> Result<TelemetryMessage, DecodeError> {
    match decode_line(line)? {
        WireLine::Reading(m) => Ok(m),
        WireLine::Ack(_) => Err(range("type", "expected \"reading\", got \"ack\"")),
    }
}

pub fn decode_ack(line: &[u8]) -> Result<AckMessage, DecodeError> {
    match decode_line(line)? {
        WireLine::Ack(a) => Ok(a),
        WireLine::Reading(_) => Err(range("type", "expected \"ack\", got \"reading\"")),
    }
}

pub fn decode_line(line: &[u8]) -> Result<WireLine, DecodeError> {
    let body = strip_newline(line);
    if body.contains(&b'\n') {
        return Err(DecodeError::Malformed("embedded newline".into()));
    }
    let value: Value = serde_json::from_slice(body).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(DecodeError::Malformed("not a JSON object".into()));
    };
    let fields = Fields(&obj);
    match fields.string("type")? {
        "reading" => decode_reading(&fields).map(WireLine::Reading),
        "ack" => Ok(WireLine::Ack(AckMessage {
            bin_id: fields.bin_id()?,
            seq: fields.uint("seq")?,
            received_at: Timestamp(fields.uint("received_at")?),
        })),
        other => Err(range("type", format!("unknown line type {other:?}"))),
    }
}

fn decode_reading(fields: &Fields<'_>) -> Result<TelemetryMessage, DecodeError> {
    let bin_id = fields.bin_id()?;
    let seq = fields.uint("seq")?;
    let sent_at = Timestamp(fields.uint("sent_at")?);
    let lat = fields.float("lat")?;
    let lon = fields.float("lon")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(range("lat", format!("{lat} outside [-90, 90]")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(range("lon", format!("{lon} outside [-180, 180]")));
    }
    let position = GeoCoordinate::new(lat, lon).map_err(|e| range("lat", e.to_string()))?;
    let sensor_a_cm = fields.nullable_float("sensor_a_cm")?;
    let sensor_b_cm = fields.nullable_float("sensor_b_cm")?;
    let kind_str = fields.string("vote_kind")?;
    let kind = VoteKind::parse(kind_str).ok_or_else(|| range("vote_kind", format!("unknown kind {kind_str:?}")))?;
    let fill = match fields.nullable_float("vote_fill")? {
        None => None,
        Some(v) => Some(FillFraction::new(v).map_err(|e| range("vote_fill", e.to_string()))?),
    };
    let battery_v = fields.float("battery_v")?;
    let msg = TelemetryMessage {
        bin_id,
        seq,
        sent_at,
        position,
        sensor_a_cm,
        sensor_b_cm,
        vote: VoteSummary { kind, fill },
        battery_v,
    };
    msg.validate()?;
    Ok(msg)
}

fn strip_newline(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn range(field: &'static str, reason: impl Into<String>) -> DecodeError {
    DecodeError::Range { field, reason: reason.into() }
}

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn get(&self, name: &'static str) -> Result<&Value, DecodeError> {
        self.0.get(name).ok_or(DecodeError::MissingField(name))
    }

    fn string(&self, name: &'static str) -> Result<&str, DecodeError> {
        match self.get(name)? {
            Value::String(s) => Ok(s),
            other => Err(DecodeError::Malformed(format!("\"{name}\" must be a string, got {}", kind_of(other)))),
        }
    }

    fn bin_id(&self) -> Result<String, DecodeError> {
        let s = self.string("bin_id")?;
        if s.is_empty() {
            return Err(range("bin_id", "empty"));
        }
        Ok(s.to_owned())
    }

    fn uint(&self, name: &'static str) -> Result<u64, DecodeError> {
        match self.get(name)? {
            Value::Number(n) => n.as_u64().ok_or_else(|| range(name, format!("{n} is not an unsigned 64-bit integer"))),
            other => Err(DecodeError::Malformed(format!("\"{name}\" must be a number, got {}", kind_of(other)))),
        }
    }

    fn float(&self, name: &'static str) -> Result<f64, DecodeError> {
        match self.get(name)? {
            Value::Number(n) => n.as_f64().filter(|v| v.is_finite()).ok_or_else(|| range(name, "not finite")),
            other => Err(DecodeError::Malformed(format!("\"{name}\" must be a number, got {}", kind_of(other)))),
        }
    }

    fn nullable_float(&self, name: &'static str) -> Result<Option<f64>, DecodeError> {
        match self.get(name)? {
            Value::Null => Ok(None),
            _ => self.float(name).map(Some),
        }
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
