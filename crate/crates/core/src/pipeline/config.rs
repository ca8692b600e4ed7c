//! Run configuration as a flat `key = value` file.
//!
//! Every key can also be set from the command line; [`RunConfig::set`] is the
//! single entry point for both, so a flag and a file line behave identically.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::granger::GcConfig;
use crate::market::Epoch;
use crate::rqa::RqaConfig;
use crate::series::WindowSpec;

/// How simulated paths couple to the external field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// One uniform draw on `[0, 1)` per path.
    Random,
    Fixed(f64),
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Random => f.write_str("random"),
            Coupling::Fixed(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("random") {
            return Ok(Coupling::Random);
        }
        let b: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("beta must be 'random' or a number, got '{s}'")))?;
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("beta {b} outside [0, 1]")));
        }
        Ok(Coupling::Fixed(b))
    }
}

impl Serialize for Coupling {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Coupling {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// `start:end:factor` triples separated by commas, e.g. `1890:2394:5,4977:5229:8`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochList(pub Vec<Epoch>);

impl fmt::Display for EpochList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| format!("{}:{}:{}", e.start, e.end, e.amplitude_factor))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for EpochList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(EpochList(Vec::new()));
        }
        s.split(',')
            .map(|part| {
                let fields: Vec<&str> = part.trim().split(':').collect();
                let bad = || Error::Config(format!("epoch '{part}' is not start:end:factor"));
                if fields.len() != 3 {
                    return Err(bad());
                }
                Ok(Epoch {
                    start: fields[0].parse().map_err(|_| bad())?,
                    end: fields[1].parse().map_err(|_| bad())?,
                    amplitude_factor: fields[2].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(EpochList)
    }
}

impl Serialize for EpochList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EpochList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub window: usize,
    pub step: usize,
    pub tau: usize,
    pub tau_prime: usize,
    pub alpha: f64,
    pub target_rr: f64,
    pub l_min: usize,
    pub v_min: usize,
    pub smoothing_window: usize,
    /// Lag order of the stationarity check run on every analysis window.
    pub adf_lag: usize,
    pub seed: u64,
    /// Compare real-data analyses with a GBM ensemble calibrated per member.
    pub baseline: bool,
    pub members: usize,
    /// Number of simulated daily steps (log-returns).
    pub steps: usize,
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub beta: Coupling,
    pub field_std: f64,
    pub epochs: EpochList,
    /// A `date,value` field file to drive `simulate` with.
    pub field: Option<PathBuf>,
    pub start_date: NaiveDate,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window: 252,
            step: 63,
            tau: 5,
            tau_prime: 5,
            alpha: 0.05,
            target_rr: 5.0,
            l_min: 2,
            v_min: 2,
            smoothing_window: 11,
            adf_lag: 1,
            seed: 1,
            baseline: true,
            members: 27,
            steps: 21 * 252,
            mu: 0.0003,
            sigma: 0.02,
            x0: 100.0,
            beta: Coupling::Random,
            field_std: 0.007,
            epochs: EpochList(vec![
                Epoch {
                    start: 1890,
                    end: 2394,
                    amplitude_factor: 5.0,
                },
                Epoch {
                    start: 4977,
                    end: 5229,
                    amplitude_factor: 8.0,
                },
            ]),
            field: None,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            inputs: Vec::new(),
            out: PathBuf::from("out"),
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            length: self.window,
            step: self.step,
        }
    }

    pub fn gc(&self) -> GcConfig {
        GcConfig {
            tau: self.tau,
            tau_prime: self.tau_prime,
            alpha: self.alpha,
        }
    }

    pub fn rqa(&self) -> RqaConfig {
        RqaConfig {
            target_rr: self.target_rr,
            l_min: self.l_min,
            v_min: self.v_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window_spec().validate()?;
        self.gc().validate()?;
        self.rqa().validate()?;
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smoothing_window {} must be odd and positive",
                self.smoothing_window
            )));
        }
        if self.members == 0 || self.steps == 0 || !(self.x0 > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::Config(
                "members and steps must be positive, x0 > 0, sigma >= 0".into(),
            ));
        }
        if !(self.field_std >= 0.0) {
            return Err(Error::Config(format!(
                "field_std {} must be >= 0",
                self.field_std
            )));
        }
        Ok(())
    }

    /// Sets one key from its textual value. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let mut obj = match serde_json::to_value(&*self)? {
            Value::Object(map) => map,
            _ => unreachable!("config serializes to an object"),
        };
        let current = obj
            .get(&key)
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        let value = value.trim();
        let parsed = match (key.as_str(), current) {
            ("inputs", _) => Value::Array(
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Value::String(s.to_string()))
                    .collect(),
            ),
            ("field", _) if value.is_empty() || value == "none" => Value::Null,
            (_, Value::Bool(_)) => match value {
                "true" | "yes" | "1" => Value::Bool(true),
                "false" | "no" | "0" => Value::Bool(false),
                _ => {
                    return Err(Error::Config(format!(
                        "{key}: expected true/false, got '{value}'"
                    )))
                }
            },
            (_, Value::Number(_)) => serde_json::from_str::<Value>(value)
                .ok()
                .filter(Value::is_number)
                .ok_or_else(|| Error::Config(format!("{key}: expected a number, got '{value}'")))?,
            _ => Value::String(value.to_string()),
        };
        obj.insert(key.clone(), parsed);
        *self = serde_json::from_value(Value::Object(obj))
            .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))?;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(e).context(path.display().to_string()))?;
        Self::parse_kv(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Renders every key in declaration order.
    pub fn to_kv(&self) -> String {
        let obj = match serde_json::to_value(self).expect("config serializes") {
            Value::Object(map) => map,
            _ => unreachable!(),
        };
        let mut out = String::new();
        for (key, value) in obj {
            let text = match value {
                Value::String(s) => s,
                Value::Null => "none".to_string(),
                Value::Array(items) => items
                    .iter()
                    .map(|v| v.as_str().unwrap_or_default().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(map) => map,
            _ => unreachable!(),
        }
    }
}
