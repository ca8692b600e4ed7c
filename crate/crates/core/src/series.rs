//! Date-indexed series, aligned ensembles and sliding-window geometry.

use std::collections::HashSet;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named scalar series on a strictly increasing calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    id: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl Series {
    pub fn new(id: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{id}: {} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.is_empty() {
            return Err(Error::InvalidSeries(format!("{id}: empty series")));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "{id}: dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "{id}: non-finite value at {}",
                dates[i]
            )));
        }
        Ok(Self { id, dates, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Transforms prices into log-returns `ln(p[k+1] / p[k])`, dated at `k + 1`.
pub fn log_returns(prices: &Series) -> Result<Series> {
    if prices.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: prices.len(),
        });
    }
    if let Some((index, &value)) = prices.values.iter().enumerate().find(|(_, &p)| p <= 0.0) {
        return Err(Error::NonPositivePrice { index, value }).map_err(|e| e.context(&prices.id));
    }
    let values = prices
        .values
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    Series::new(prices.id.clone(), prices.dates[1..].to_vec(), values)
}

/// Members sharing one calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    calendar: Vec<NaiveDate>,
    members: Vec<Series>,
}

impl Ensemble {
    pub fn new(members: Vec<Series>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::EmptyEnsemble(String::new()))?;
        let calendar = first.dates.clone();
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidSeries(format!(
                    "duplicate member id {}",
                    m.id
                )));
            }
            if m.dates != calendar {
                return Err(Error::InvalidSeries(format!(
                    "member {} does not share the ensemble calendar",
                    m.id
                )));
            }
        }
        Ok(Self { calendar, members })
    }

    /// Builds an ensemble from raw value columns over a shared calendar.
    pub fn from_columns(
        calendar: Vec<NaiveDate>,
        columns: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self> {
        let members = columns
            .into_iter()
            .map(|(id, values)| Series::new(id, calendar.clone(), values))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn members(&self) -> &[Series] {
        &self.members
    }

    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn log_returns(&self) -> Result<Ensemble> {
        Self::new(
            self.members
                .iter()
                .map(log_returns)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Value slices of every member over one window.
    pub fn window_slices(&self, w: &WindowIndex) -> Vec<&[f64]> {
        self.members
            .iter()
            .map(|m| &m.values[w.start..w.end])
            .collect()
    }
}

/// Sliding-window geometry in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 252,
            step: 63,
        }
    }
}

impl WindowSpec {
    pub fn new(length: usize, step: usize) -> Result<Self> {
        let spec = Self { length, step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 || self.step < 1 {
            return Err(Error::InvalidParameter(format!(
                "window length {} / step {} (need length >= 2, step >= 1)",
                self.length, self.step
            )));
        }
        Ok(())
    }
}

/// One window `[start, end)` labelled with the date of its middle element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowIndex {
    pub start: usize,
    pub end: usize,
    pub label_date: NaiveDate,
}

/// Full windows over `calendar`, starting at 0 and advancing by `spec.step`.
/// A trailing partial window is discarded.
pub fn windows(calendar: &[NaiveDate], spec: WindowSpec) -> Result<Vec<WindowIndex>> {
    spec.validate()?;
    let n = calendar.len();
    if n < spec.length {
        return Err(Error::SeriesShorterThanWindow {
            len: n,
            window: spec.length,
        });
    }
    let count = (n - spec.length) / spec.step + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * spec.step;
            WindowIndex {
                start,
                end: start + spec.length,
                label_date: calendar[start + spec.length / 2],
            }
        })
        .collect())
}

/// `count` consecutive Monday-to-Friday dates beginning at or after `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(count)
        .collect()
}
