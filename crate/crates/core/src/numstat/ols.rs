use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Design matrix for [`ols`], one row per observation.
pub type Design = DMatrix<f64>;

/// A least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub n_obs: usize,
    pub n_params: usize,
    residuals: Vec<f64>,
    r_factor: DMatrix<f64>,
}

// Relative size below which a pivot of R marks its column as a linear
// combination of the preceding ones.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares through a Householder QR factorization.
///
/// Rank is checked column by column: a column is rejected when its pivot in
/// `R` is negligible next to the column's own norm, which keeps the check
/// independent of how each regressor is scaled.
pub fn ols(design: &Design, response: &[f64]) -> Result<OlsFit> {
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(Error::InvalidParameter(format!(
            "response has {} rows, design has {n}",
            response.len()
        )));
    }
    if n <= k {
        return Err(Error::TooShort {
            needed: k + 1,
            got: n,
        });
    }
    if let Some(bad) = response
        .iter()
        .chain(design.iter())
        .find(|v| !v.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "non-finite regression input {bad}"
        )));
    }

    let column_norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let qr = design.clone().qr();
    let r = qr.r();
    for (j, &norm) in column_norms.iter().enumerate() {
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::RankDeficient { column: j });
        }
    }

    let mut qty = DVector::from_column_slice(response);
    qr.q_tr_mul(&mut qty);
    let beta = r
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .ok_or(Error::RankDeficient { column: k - 1 })?;

    let fitted = design * &beta;
    let residuals: Vec<f64> = response
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();

    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        rss,
        n_obs: n,
        n_params: k,
        residuals,
        r_factor: r,
    })
}

impl OlsFit {
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn residual_dof(&self) -> usize {
        self.n_obs - self.n_params
    }

    /// Classical (homoskedastic) coefficient standard errors.
    pub fn std_errors(&self) -> Vec<f64> {
        let k = self.n_params;
        let s2 = self.rss / self.residual_dof() as f64;
        // diag((R^T R)^-1) is the squared row norms of R^-1.
        let r_inv = self
            .r_factor
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
        (0..k)
            .map(|i| (s2 * r_inv.row(i).norm_squared()).sqrt())
            .collect()
    }
}
