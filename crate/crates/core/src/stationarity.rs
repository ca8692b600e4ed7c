//! Augmented Dickey-Fuller unit-root test, constant-only specification.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat::ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "1%")]
    OnePercent,
    #[serde(rename = "5%")]
    FivePercent,
    #[serde(rename = "10%")]
    TenPercent,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    /// Strongest level at which the unit-root null is rejected.
    pub reject_unit_root_at: Significance,
}

impl AdfResult {
    pub fn rejects_at(&self, level: Significance) -> bool {
        self.reject_unit_root_at <= level && self.reject_unit_root_at != Significance::None
    }
}

/// Null-distribution quantiles (1%, 5%, 10%) of the constant-only ADF t-statistic
/// at lag order 1, simulated with 100 000 random walks per length by
/// `examples/calibrate_adf.rs`.
pub const ADF_CRITICAL_VALUES: [(usize, [f64; 3]); 3] = [
    (250, [-3.4343, -2.8705, -2.5728]),
    (500, [-3.4324, -2.8584, -2.5608]),
    (1000, [-3.4360, -2.8677, -2.5703]),
];

/// Critical values for a series of `n` points, interpolated linearly in `1/n`
/// between calibrated lengths and held constant outside them.
pub fn critical_values(n: usize) -> [f64; 3] {
    let table = &ADF_CRITICAL_VALUES;
    if n <= table[0].0 {
        return table[0].1;
    }
    if n >= table[table.len() - 1].0 {
        return table[table.len() - 1].1;
    }
    let inv = 1.0 / n as f64;
    for pair in table.windows(2) {
        let (n0, c0) = pair[0];
        let (n1, c1) = pair[1];
        if n <= n1 {
            let (i0, i1) = (1.0 / n0 as f64, 1.0 / n1 as f64);
            let t = (inv - i0) / (i1 - i0);
            return std::array::from_fn(|k| c0[k] + t * (c1[k] - c0[k]));
        }
    }
    unreachable!("n is inside the table range")
}

/// The ADF t-statistic on `gamma` in
/// `dy_t = a + gamma * y_{t-1} + sum_{i=1..p} delta_i * dy_{t-i} + e_t`.
pub fn adf_statistic(values: &[f64], max_lag: usize) -> Result<f64> {
    let n = values.len();
    if n < max_lag + 10 {
        return Err(Error::TooShort {
            needed: max_lag + 10,
            got: n,
        });
    }
    let dy: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[t] = y[t + 1] - y[t]; regress dy[t] for t in max_lag..dy.len()
    let rows = dy.len() - max_lag;
    let design = DMatrix::from_fn(rows, 2 + max_lag, |r, c| {
        let t = r + max_lag;
        match c {
            0 => 1.0,
            1 => values[t],
            lag => dy[t - (lag - 1)],
        }
    });
    let response = &dy[max_lag..];
    let fit = ols(&design, response).map_err(|e| match e {
        Error::RankDeficient { column } => {
            Error::SingularRegression(format!("collinear ADF regressor {column}"))
        }
        other => other,
    })?;
    let se = fit.std_errors()[1];
    if !(se > 0.0) {
        return Err(Error::SingularRegression("zero residual variance".into()));
    }
    Ok(fit.coefficients[1] / se)
}

/// Runs the test and classifies the statistic against [`critical_values`].
pub fn adf_stationarity(values: &[f64], max_lag: usize) -> Result<AdfResult> {
    let statistic = adf_statistic(values, max_lag)?;
    let [c1, c5, c10] = critical_values(values.len());
    let reject_unit_root_at = if statistic < c1 {
        Significance::OnePercent
    } else if statistic < c5 {
        Significance::FivePercent
    } else if statistic < c10 {
        Significance::TenPercent
    } else {
        Significance::None
    };
    Ok(AdfResult {
        statistic,
        reject_unit_root_at,
    })
}
