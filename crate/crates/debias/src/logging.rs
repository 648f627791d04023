//! Structured logging: one JSON object per line on stderr.
//!
//! Every record carries `ts` (seconds since the Unix epoch), `level`,
//! `event`, and any extra fields, so logs stay machine-parseable while
//! stdout remains reserved for command output.

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Level {
    Debug,
    #[default]
    Info,
    Warn,
    Error,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Debug => "debug",
            Level::Info => "info",
            Level::Warn => "warn",
            Level::Error => "error",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadLevel(pub String);

impl fmt::Display for BadLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown log level {:?} (expected debug, info, warn, or error)",
            self.0
        )
    }
}

impl std::error::Error for BadLevel {}

impl FromStr for Level {
    type Err = BadLevel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "debug" => Ok(Level::Debug),
            "info" => Ok(Level::Info),
            "warn" | "warning" => Ok(Level::Warn),
            "error" => Ok(Level::Error),
            _ => Err(BadLevel(s.to_string())),
        }
    }
}

/// Renders one log record as a single-line JSON object. Extra fields sit at
/// the top level beside `ts`/`level`/`event`; non-object `fields` values are
/// nested under a `"fields"` key rather than dropped.
pub fn format_record(ts: f64, level: Level, event: &str, fields: Value) -> String {
    let mut record = Map::new();
    record.insert("ts".into(), json!(ts));
    record.insert("level".into(), json!(level.as_str()));
    record.insert("event".into(), json!(event));
    match fields {
        Value::Null => {}
        Value::Object(map) => {
            for (key, value) in map {
                // Reserved keys win; a field named "ts" must not clobber the
                // timestamp.
                record.entry(key).or_insert(value);
            }
        }
        other => {
            record.insert("fields".into(), other);
        }
    }
    Value::Object(record).to_string()
}

/// A leveled JSON-line logger writing to stderr.
#[derive(Debug, Clone, Copy)]
pub struct Logger {
    min_level: Level,
}

impl Default for Logger {
    fn default() -> Self {
        Self::new(Level::Info)
    }
}

impl Logger {
    pub fn new(min_level: Level) -> Self {
        Self { min_level }
    }

    pub fn level(&self) -> Level {
        self.min_level
    }

    fn now() -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }

    /// Emits a record if `level` clears the configured minimum.
    pub fn log(&self, level: Level, event: &str, fields: Value) {
        if level < self.min_level {
            return;
        }
        eprintln!("{}", format_record(Self::now(), level, event, fields));
    }

    pub fn debug(&self, event: &str, fields: Value) {
        self.log(Level::Debug, event, fields);
    }

    pub fn info(&self, event: &str, fields: Value) {
        self.log(Level::Info, event, fields);
    }

    pub fn warn(&self, event: &str, fields: Value) {
        self.log(Level::Warn, event, fields);
    }

    pub fn error(&self, event: &str, fields: Value) {
        self.log(Level::Error, event, fields);
    }
}
