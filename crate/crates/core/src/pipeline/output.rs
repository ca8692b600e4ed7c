//! Plot-ready file output.
//!
//! Reals are written with 12 significant digits, dates as ISO-8601, lines end
//! in `\n`. Each CSV gets a `<name>.json` sidecar carrying the run metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::pipeline::RunConfig;
use crate::series::{Ensemble, Series};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a real like C's `%.12g`.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `date,value` lines for one series.
pub fn series_csv(series: &Series) -> String {
    let mut out = String::from("date,value\n");
    for (d, v) in series.dates().iter().zip(series.values()) {
        let _ = writeln!(out, "{d},{}", fmt_real(*v));
    }
    out
}

/// Several same-calendar columns side by side under a `date` column.
pub fn columns_csv(dates: &[NaiveDate], columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("date");
    for (name, values) in columns {
        debug_assert_eq!(values.len(), dates.len());
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, d) in dates.iter().enumerate() {
        let _ = write!(out, "{d}");
        for (_, values) in columns {
            out.push(',');
            out.push_str(&fmt_real(values[i]));
        }
        out.push('\n');
    }
    out
}

/// Every member of an ensemble as one wide table.
pub fn ensemble_csv(ensemble: &Ensemble) -> String {
    let ids = ensemble.ids();
    let columns: Vec<(&str, &[f64])> = ids
        .iter()
        .zip(ensemble.members())
        .map(|(id, m)| (id.as_str(), m.values()))
        .collect();
    columns_csv(ensemble.calendar(), &columns)
}

/// A labelled square matrix; row `i`, column `j` holds `cell(i, j)`.
pub fn matrix_csv(ids: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..ids.len() {
            out.push(',');
            out.push_str(&cell(i, j));
        }
        out.push('\n');
    }
    out
}

/// Metadata common to every file a run writes.
pub fn run_metadata(command: &str, cfg: &RunConfig) -> Map<String, Value> {
    let mut meta = Map::new();
    meta.insert("command".into(), json!(command));
    meta.insert("code_version".into(), json!(CODE_VERSION));
    meta.insert("config".into(), Value::Object(cfg.to_json()));
    meta.insert(
        "conventions".into(),
        json!({
            "window_label": "date of element start + length / 2",
            "granger_rows": "max(tau, tau_prime) leading rows dropped from both models",
            "recurrence": "strict |x_i - x_j| < epsilon, line of identity excluded",
            "epsilon_ties": "midpoint of the q-th and (q+1)-th ordered pair distances",
            "field": "centered moving average of the ensemble mean log-return, de-meaned",
            "beta_stream": "betas drawn from stream u64::MAX of the run seed",
        }),
    );
    meta
}

/// Recovers the config echoed in a metadata file.
pub fn config_from_metadata(meta: &Value) -> Result<RunConfig> {
    let cfg = meta
        .get("config")
        .ok_or_else(|| Error::Config("metadata has no config block".into()))?;
    serde_json::from_value(cfg.clone()).map_err(|e| Error::Config(e.to_string()))
}

/// Writes into one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    metadata: Map<String, Value>,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, metadata: Map<String, Value>) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io(e).context(root.display().to_string()))?;
        Ok(Self {
            root: root.to_path_buf(),
            metadata,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write_raw(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::Io(e).context(parent.display().to_string()))?;
        }
        fs::write(&path, content).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
        self.written.push(PathBuf::from(rel));
        Ok(())
    }

    /// Writes a CSV and its metadata sidecar; `extra` lands under `"file"`.
    pub fn csv(&mut self, rel: &str, content: &str, extra: Value) -> Result<()> {
        self.write_raw(rel, content)?;
        let mut meta = self.metadata.clone();
        meta.insert("file".into(), extra);
        self.json(&format!("{rel}.json"), &Value::Object(meta))
    }

    pub fn json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_raw(rel, &text)
    }

    pub fn text(&mut self, rel: &str, content: &str) -> Result<()> {
        self.write_raw(rel, content)
    }

    /// One JSON object per line; an empty file when there is nothing to report.
    pub fn diagnostics(&mut self, diagnostics: &[Diagnostic]) -> Result<()> {
        let mut text = String::new();
        for d in diagnostics {
            text.push_str(&serde_json::to_string(d)?);
            text.push('\n');
        }
        self.write_raw("diagnostics.jsonl", &text)
    }

    /// `metadata.json` with the run summary and the list of files written.
    pub fn finish(mut self, summary: Map<String, Value>) -> Result<Vec<PathBuf>> {
        let mut meta = self.metadata.clone();
        meta.insert("summary".into(), Value::Object(summary));
        let mut files: Vec<String> = self
            .written
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        files.push("metadata.json".into());
        meta.insert("files".into(), json!(files));
        self.json("metadata.json", &Value::Object(meta))?;
        Ok(self.written)
    }
}
