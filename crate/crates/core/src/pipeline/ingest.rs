//! CSV price ingestion and calendar alignment.
//!
//! Two layouts are recognized from the header: `date,close` (one ticker per
//! file, named after the file stem) and `date,<ticker>,...` (one column per
//! ticker). Empty, `NA`, `null` and `NaN` cells count as missing dates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{Ensemble, Series};

/// Members missing more than this share of the union calendar are rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.05;

const CLOSE_HEADERS: [&str; 4] = ["close", "adj_close", "adj close", "adjclose"];

/// One ticker as read from disk, before alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub id: String,
    pub source: PathBuf,
    pub points: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedMember {
    pub id: String,
    pub missing: usize,
    pub total: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IngestReport {
    pub files: Vec<PathBuf>,
    pub members: Vec<String>,
    pub rejected: Vec<RejectedMember>,
    pub union_dates: usize,
    pub dropped_dates: Vec<NaiveDate>,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null"
    )
}

/// Expands directories to their `*.csv` files, sorted by name.
pub fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Error::Io(e).context(path.display().to_string()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyEnsemble("no input files".into()));
    }
    Ok(files)
}

/// Reads every ticker found in one CSV file.
pub fn read_price_file(path: &Path) -> Result<Vec<RawSeries>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(e).context(path.display().to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(parse_err(1, "header must be date,<column>,...".into()));
    }
    let per_ticker = header.len() == 2
        && CLOSE_HEADERS
            .iter()
            .any(|h| header[1].eq_ignore_ascii_case(h));
    let ids: Vec<String> = if per_ticker {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        vec![stem]
    } else {
        header.iter().skip(1).map(str::to_string).collect()
    };
    let mut columns: Vec<BTreeMap<NaiveDate, f64>> = vec![BTreeMap::new(); ids.len()];

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date '{}': {e}", &record[0])))?;
        for (k, column) in columns.iter_mut().enumerate() {
            let cell = &record[k + 1];
            if is_missing(cell) {
                continue;
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("bad number '{cell}' for {}", ids[k])))?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("non-finite value for {}", ids[k])));
            }
            if column.insert(date, value).is_some() {
                return Err(parse_err(
                    line,
                    format!("duplicate date {date} for {}", ids[k]),
                ));
            }
        }
    }
    Ok(ids
        .into_iter()
        .zip(columns)
        .map(|(id, points)| RawSeries {
            id,
            source: path.to_path_buf(),
            points,
        })
        .collect())
}

/// Drops members with too many gaps, then keeps the dates every remaining
/// member has.
pub fn align(raw: Vec<RawSeries>) -> Result<(Ensemble, IngestReport)> {
    let mut report = IngestReport::default();
    let union: BTreeSet<NaiveDate> = raw.iter().flat_map(|r| r.points.keys().copied()).collect();
    report.union_dates = union.len();

    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for r in raw {
        if !seen.insert(r.id.clone()) {
            return Err(Error::InvalidSeries(format!(
                "ticker {} appears twice (second time in {})",
                r.id,
                r.source.display()
            )));
        }
        let missing = union.len() - r.points.len();
        if missing as f64 > MAX_MISSING_FRACTION * union.len() as f64 {
            let err = Error::ExcessiveMissingData {
                id: r.id.clone(),
                missing,
                total: union.len(),
            };
            log::warn!("{err}");
            report.rejected.push(RejectedMember {
                id: r.id,
                missing,
                total: union.len(),
                reason: err.to_string(),
            });
            continue;
        }
        kept.push(r);
    }
    if kept.is_empty() {
        return Err(Error::EmptyEnsemble("every member was rejected".into()));
    }

    let kept_union: BTreeSet<NaiveDate> =
        kept.iter().flat_map(|r| r.points.keys().copied()).collect();
    let calendar: Vec<NaiveDate> = kept_union
        .iter()
        .copied()
        .filter(|d| kept.iter().all(|r| r.points.contains_key(d)))
        .collect();
    report.dropped_dates = kept_union
        .iter()
        .copied()
        .filter(|d| calendar.binary_search(d).is_err())
        .collect();
    if calendar.is_empty() {
        return Err(Error::EmptyEnsemble("members share no dates".into()));
    }

    let members = kept
        .into_iter()
        .map(|r| {
            let values = calendar.iter().map(|d| r.points[d]).collect();
            report.members.push(r.id.clone());
            Series::new(r.id, calendar.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Ensemble::new(members)?, report))
}

/// Reads files and directories of CSV prices into one aligned ensemble.
pub fn ingest_csv(paths: &[PathBuf]) -> Result<(Ensemble, IngestReport)> {
    let files = expand_inputs(paths)?;
    let mut raw = Vec::new();
    for file in &files {
        raw.extend(read_price_file(file)?);
    }
    let (ensemble, mut report) = align(raw)?;
    report.files = files;
    Ok((ensemble, report))
}
