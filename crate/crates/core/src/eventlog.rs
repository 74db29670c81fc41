//! `events.ndjson`: a header line followed by one [`Event`] per line.
//!
//! ```text
//! {"type":"log_header","version":1,"seed":1,"config_hash":"9f2c..."}
//! {"at":1704067200000,"kind":"START",...}
//! ```
//!
//! Every line, including the last, ends in `\n`. A final line without one is
//! reported as truncated.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Event;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    #[serde(rename = "type")]
    pub ty: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
}

impl LogHeader {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        LogHeader { ty: "log_header".into(), version: LOG_VERSION, seed, config_hash: config_hash.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogErrorKind {
    MissingHeader,
    BadHeader,
    UnsupportedVersion,
    Malformed,
    Truncated,
    OutOfOrder,
    Inconsistent,
}

impl fmt::Display for LogErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogErrorKind::MissingHeader => "MISSING_HEADER",
            LogErrorKind::BadHeader => "BAD_HEADER",
            LogErrorKind::UnsupportedVersion => "UNSUPPORTED_VERSION",
            LogErrorKind::Malformed => "MALFORMED",
            LogErrorKind::Truncated => "TRUNCATED",
            LogErrorKind::OutOfOrder => "OUT_OF_ORDER",
            LogErrorKind::Inconsistent => "INCONSISTENT",
        })
    }
}

/// A log that cannot be replayed. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at line {line}: {detail}")]
pub struct LogError {
    pub kind: LogErrorKind,
    pub line: usize,
    pub detail: String,
}

impl LogError {
    pub fn new(kind: LogErrorKind, line: usize, detail: impl Into<String>) -> Self {
        LogError { kind, line, detail: detail.into() }
    }
}

pub fn write_header<W: Write>(out: &mut W, header: &LogHeader) -> io::Result<()> {
    serde_json::to_writer(&mut *out, header)?;
    out.write_all(b"\n")
}

pub fn write_event<W: Write>(out: &mut W, event: &Event) -> io::Result<()> {
    serde_json::to_writer(&mut *out, event)?;
    out.write_all(b"\n")
}

pub fn write_log<W: Write>(out: &mut W, header: &LogHeader, events: &[Event]) -> io::Result<()> {
    write_header(out, header)?;
    for e in events {
        write_event(out, e)?;
    }
    Ok(())
}

pub fn to_bytes(header: &LogHeader, events: &[Event]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(&mut buf, header, events).expect("writing to a Vec cannot fail");
    buf
}

type Lines<'a> = std::iter::Peekable<std::iter::Enumerate<std::slice::Split<'a, u8, fn(&u8) -> bool>>>;

/// Lazily parses a log, yielding `(line number, event)`.
pub struct LogReader<'a> {
    lines: Lines<'a>,
    header: LogHeader,
    last_at: Option<u64>,
    ends_with_newline: bool,
}

impl<'a> LogReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, LogError> {
        if bytes.is_empty() {
            return Err(LogError::new(LogErrorKind::MissingHeader, 1, "empty log"));
        }
        let ends_with_newline = bytes.ends_with(b"\n");
        // drop the empty slice after the final newline
        let body = if ends_with_newline { &bytes[..bytes.len() - 1] } else { bytes };
        let is_nl: fn(&u8) -> bool = |b| *b == b'\n';
        let mut lines = body.split(is_nl).enumerate().peekable();
        let (_, first) = lines.next().expect("split yields at least one item");
        if !ends_with_newline && lines.peek().is_none() {
            return Err(LogError::new(LogErrorKind::Truncated, 1, "header line has no terminating newline"));
        }
        let value: serde_json::Value = serde_json::from_slice(first)
            .map_err(|e| LogError::new(LogErrorKind::MissingHeader, 1, format!("first line is not JSON: {e}")))?;
        if value.get("type").and_then(|t| t.as_str()) != Some("log_header") {
            return Err(LogError::new(LogErrorKind::MissingHeader, 1, "first line is not a log_header"));
        }
        let header: LogHeader =
            serde_json::from_value(value).map_err(|e| LogError::new(LogErrorKind::BadHeader, 1, e.to_string()))?;
        if header.version != LOG_VERSION {
            return Err(LogError::new(
                LogErrorKind::UnsupportedVersion,
                1,
                format!("version {} (supported: {LOG_VERSION})", header.version),
            ));
        }
        Ok(LogReader { lines, header, last_at: None, ends_with_newline })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }
}

impl Iterator for LogReader<'_> {
    type Item = Result<(usize, Event), LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (idx, raw) = self.lines.next()?;
        let line_no = idx + 1;
        let is_last = self.lines.peek().is_none();
        if is_last && !self.ends_with_newline {
            return Some(Err(LogError::new(LogErrorKind::Truncated, line_no, "last line has no terminating newline")));
        }
        let event: Event = match serde_json::from_slice(raw) {
            Ok(e) => e,
            Err(e) => return Some(Err(LogError::new(LogErrorKind::Malformed, line_no, e.to_string()))),
        };
        if self.last_at.is_some_and(|prev| event.at.0 < prev) {
            return Some(Err(LogError::new(
                LogErrorKind::OutOfOrder,
                line_no,
                format!("time {} precedes {}", event.at.0, self.last_at.unwrap_or(0)),
            )));
        }
        self.last_at = Some(event.at.0);
        Some(Ok((line_no, event)))
    }
}

/// Parses a complete log, stopping at the first bad line.
pub fn parse_log(bytes: &[u8]) -> Result<(LogHeader, Vec<Event>), LogError> {
    let mut reader = LogReader::new(bytes)?;
    let header = reader.header().clone();
    let mut events = Vec::new();
    for item in &mut reader {
        events.push(item?.1);
    }
    Ok((header, events))
}
