//! Bivariate linear Granger causality and its windowed pairwise application.
//!
//! For a candidate cause `x` and effect `y` the unrestricted model regresses
//! `y_t` on an intercept, `tau_prime` lags of `y` and `tau` lags of `x`; the
//! restricted model drops the `x` lags. Both are fitted on the same rows (the
//! first `max(tau, tau_prime)` observations are dropped once) and compared
//! with the nested-model F-test.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::numstat::{f_sf, ols, pearson_corr};
use crate::series::{windows, Ensemble, Series, WindowIndex, WindowSpec};

/// Lag orders and significance level of the causality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcConfig {
    /// Lags of the candidate cause.
    pub tau: usize,
    /// Lags of the effect's own past.
    pub tau_prime: usize,
    pub alpha: f64,
}

impl Default for GcConfig {
    fn default() -> Self {
        Self {
            tau: 5,
            tau_prime: 5,
            alpha: 0.05,
        }
    }
}

impl GcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 || self.tau_prime < 1 || !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau = {}, tau_prime = {}, alpha = {} (need lags >= 1 and 0 < alpha < 1)",
                self.tau, self.tau_prime, self.alpha
            )));
        }
        Ok(())
    }

    fn max_lag(&self) -> usize {
        self.tau.max(self.tau_prime)
    }

    /// Smallest series length the test accepts.
    pub fn min_length(&self) -> usize {
        self.tau + self.tau_prime + 12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub causal: bool,
    pub d1: usize,
    pub d2: usize,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
}

/// Tests whether `x` Granger-causes `y`.
pub fn gc_test(x: &[f64], y: &[f64], cfg: &GcConfig) -> Result<GcResult> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "cause has {} points, effect has {}",
            x.len(),
            y.len()
        )));
    }
    let n = y.len();
    if n < cfg.min_length() {
        return Err(Error::TooShort {
            needed: cfg.min_length(),
            got: n,
        });
    }
    let p = cfg.max_lag();
    let rows = n - p;
    let k_r = 1 + cfg.tau_prime;
    let k_u = k_r + cfg.tau;
    let response = &y[p..];

    let unrestricted = DMatrix::from_fn(rows, k_u, |r, c| {
        let t = r + p;
        if c == 0 {
            1.0
        } else if c <= cfg.tau_prime {
            y[t - c]
        } else {
            x[t - (c - cfg.tau_prime)]
        }
    });
    let restricted = unrestricted.columns(0, k_r).into_owned();

    let fit_r = ols(&restricted, response)?;
    let fit_u = ols(&unrestricted, response)?;

    let d1 = cfg.tau;
    let d2 = rows - k_u;
    let rss_u = fit_u.rss;
    // Nested fits on identical rows: RSS_u <= RSS_r up to rounding.
    let rss_r = fit_r.rss.max(rss_u);
    let f_statistic = if rss_u > 0.0 {
        ((rss_r - rss_u) / d1 as f64) / (rss_u / d2 as f64)
    } else if rss_r > 0.0 {
        f64::INFINITY
    } else {
        return Err(Error::SingularRegression(
            "effect is fitted exactly by both models".into(),
        ));
    };
    let p_value = f_sf(f_statistic, d1, d2);
    Ok(GcResult {
        f_statistic,
        p_value,
        causal: p_value < cfg.alpha,
        d1,
        d2,
        rss_restricted: rss_r,
        rss_unrestricted: rss_u,
    })
}

/// Pairwise verdicts for one window. `verdicts[i][j]` is "member i causes
/// member j"; the diagonal is always false and `p_values` there is NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityMatrix {
    pub ids: Vec<String>,
    pub verdicts: Vec<Vec<bool>>,
    pub p_values: Vec<Vec<f64>>,
    pub window: WindowIndex,
}

impl CausalityMatrix {
    /// Fraction of causal off-diagonal entries.
    pub fn density(&self) -> f64 {
        let m = self.ids.len();
        let causal = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.verdicts[i][j])
            .count();
        causal as f64 / (m * (m - 1)) as f64
    }
}

/// Evaluates every ordered pair of `data` (one slice per member).
///
/// A pair whose test fails is recorded as non-causal with `p = 1` and a
/// diagnostic, so one degenerate member cannot void the window.
pub fn causality_matrix(
    ids: &[String],
    data: &[&[f64]],
    window: WindowIndex,
    cfg: &GcConfig,
) -> Result<(CausalityMatrix, Vec<Diagnostic>)> {
    cfg.validate()?;
    let m = data.len();
    if m < 2 || ids.len() != m {
        return Err(Error::InvalidParameter(format!(
            "causality matrix needs >= 2 members with ids, got {m} series and {} ids",
            ids.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let outcomes: Vec<Result<GcResult>> = pairs
        .par_iter()
        .map(|&(i, j)| gc_test(data[i], data[j], cfg))
        .collect();

    let mut verdicts = vec![vec![false; m]; m];
    let mut p_values = vec![vec![f64::NAN; m]; m];
    let mut diagnostics = Vec::new();
    for (&(i, j), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                verdicts[i][j] = r.causal;
                p_values[i][j] = r.p_value;
            }
            Err(e) => {
                p_values[i][j] = 1.0;
                let subject = format!("{}->{}", ids[i], ids[j]);
                warn!(
                    "granger pair {subject} in window at {}: {e}",
                    window.label_date
                );
                diagnostics.push(Diagnostic::new("granger", subject, e.to_string()));
            }
        }
    }
    Ok((
        CausalityMatrix {
            ids: ids.to_vec(),
            verdicts,
            p_values,
            window,
        },
        diagnostics,
    ))
}

/// Causality matrices for every window of an ensemble of log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedCausality {
    pub matrices: Vec<CausalityMatrix>,
    pub diagnostics: Vec<Diagnostic>,
}

impl WindowedCausality {
    /// Off-diagonal density per window, dated at the window midpoints.
    pub fn mean_series(&self) -> Series {
        let dates = self.matrices.iter().map(|m| m.window.label_date).collect();
        let values = self.matrices.iter().map(CausalityMatrix::density).collect();
        Series::new("mean_causality", dates, values).expect("window labels increase")
    }
}

pub fn windowed_causality(
    returns: &Ensemble,
    spec: WindowSpec,
    cfg: &GcConfig,
) -> Result<WindowedCausality> {
    let ids = returns.ids();
    let mut matrices = Vec::new();
    let mut diagnostics = Vec::new();
    for (k, w) in windows(returns.calendar(), spec)?.into_iter().enumerate() {
        let (matrix, diags) = causality_matrix(&ids, &returns.window_slices(&w), w, cfg)
            .map_err(|e| e.context(format!("window {k} ({})", w.label_date)))?;
        matrices.push(matrix);
        diagnostics.extend(diags.into_iter().map(|d| d.in_window(k, w.label_date)));
    }
    Ok(WindowedCausality {
        matrices,
        diagnostics,
    })
}

/// Mean of the pairwise causality matrix in every window.
pub fn mean_causality_series(
    returns: &Ensemble,
    spec: WindowSpec,
    cfg: &GcConfig,
) -> Result<Series> {
    Ok(windowed_causality(returns, spec, cfg)?.mean_series())
}

/// Symmetric Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub ids: Vec<String>,
    /// NaN wherever a constant member is involved.
    pub values: Vec<Vec<f64>>,
    pub constant_members: Vec<String>,
}

pub fn correlation_matrix(ids: &[String], data: &[&[f64]]) -> Result<CorrelationMatrix> {
    let m = data.len();
    if m < 2 || ids.len() != m {
        return Err(Error::InvalidParameter(format!(
            "correlation matrix needs >= 2 members with ids, got {m} series and {} ids",
            ids.len()
        )));
    }
    let constant: Vec<bool> = data.iter().map(|d| d.iter().all(|&v| v == d[0])).collect();
    let mut values = vec![vec![f64::NAN; m]; m];
    for i in 0..m {
        values[i][i] = 1.0;
        for j in (i + 1)..m {
            if constant[i] || constant[j] {
                continue;
            }
            let r = pearson_corr(data[i], data[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    let constant_members = ids
        .iter()
        .zip(&constant)
        .filter(|(_, &c)| c)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(CorrelationMatrix {
        ids: ids.to_vec(),
        values,
        constant_members,
    })
}

/// Fraction of windows whose value exceeds `baseline_mean + 2 * baseline_sd`.
pub fn exceedance_fraction(series: &Series, baseline_mean: f64, baseline_sd: f64) -> Result<f64> {
    if !(baseline_sd > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "baseline standard deviation {baseline_sd} must be positive"
        )));
    }
    let threshold = baseline_mean + 2.0 * baseline_sd;
    let above = series.values().iter().filter(|&&v| v > threshold).count();
    Ok(above as f64 / series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numstat::RandomSource;
    use crate::series::business_days;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn coupled_pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let burn = 100;
        let x = RandomSource::new(seed, 0).normals(n + burn);
        let eps = RandomSource::new(seed, 1).normals(n + burn);
        let mut y = vec![0.0; n + burn];
        for t in 1..n + burn {
            y[t] = 0.5 * y[t - 1] + 0.8 * x[t - 1] + eps[t];
        }
        (x[burn..].to_vec(), y[burn..].to_vec())
    }

    fn binomial_band(rate: f64, p: f64, n: usize) -> bool {
        (rate - p).abs() <= 2.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    fn window(n: usize) -> WindowIndex {
        WindowIndex {
            start: 0,
            end: n,
            label_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        }
    }

    #[test]
    fn degrees_of_freedom() {
        let (x, y) = coupled_pair(1, 300);
        let cfg = GcConfig {
            tau: 3,
            tau_prime: 5,
            alpha: 0.05,
        };
        let r = gc_test(&x, &y, &cfg).unwrap();
        assert_eq!(r.d1, 3);
        assert_eq!(r.d2, (300 - 5) - (1 + 5 + 3));
        assert!(r.rss_unrestricted <= r.rss_restricted);
    }

    #[test]
    fn engineered_coupling_is_detected_one_way() {
        let cfg = GcConfig::default();
        let (x, y) = coupled_pair(3, 1000);
        assert!(gc_test(&x, &y, &cfg).unwrap().p_value < 1e-6);

        let seeds = 500;
        let reverse = (0..seeds)
            .filter(|&s| {
                let (x, y) = coupled_pair(s, 1000);
                gc_test(&y, &x, &cfg).unwrap().causal
            })
            .count();
        let rate = reverse as f64 / seeds as f64;
        assert!(
            binomial_band(rate, cfg.alpha, seeds as usize),
            "y->x rate {rate}"
        );
    }

    #[test]
    fn size_under_independence() {
        let cfg = GcConfig::default();
        let seeds = 1000;
        let hits = (0..seeds)
            .filter(|&s| {
                let x = RandomSource::new(s, 10).normals(1000);
                let y = RandomSource::new(s, 11).normals(1000);
                gc_test(&x, &y, &cfg).unwrap().causal
            })
            .count();
        let rate = hits as f64 / seeds as f64;
        assert!(
            binomial_band(rate, cfg.alpha, seeds as usize),
            "size {rate}"
        );
    }

    #[test]
    fn shuffled_cause_loses_causality() {
        let cfg = GcConfig::default();
        let seeds = 500;
        let hits = (0..seeds)
            .filter(|&s| {
                let (mut x, y) = coupled_pair(s, 1000);
                RandomSource::new(s, 7).shuffle(&mut x);
                gc_test(&x, &y, &cfg).unwrap().causal
            })
            .count();
        let rate = hits as f64 / seeds as f64;
        // 3 binomial standard errors
        assert!(
            (rate - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 500.0).sqrt(),
            "rate {rate}"
        );
    }

    #[test]
    fn self_pair_is_rank_deficient() {
        let x = RandomSource::new(4, 0).normals(200);
        assert!(matches!(
            gc_test(&x, &x, &GcConfig::default()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn guards() {
        let cfg = GcConfig::default();
        let x = RandomSource::new(4, 0).normals(20);
        assert!(matches!(gc_test(&x, &x, &cfg), Err(Error::TooShort { .. })));
        let y = RandomSource::new(4, 1).normals(21);
        assert!(gc_test(&x, &y, &cfg).is_err());
        let bad = GcConfig { alpha: 1.0, ..cfg };
        assert!(bad.validate().is_err());
        let bad = GcConfig { tau: 0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn matrix_for_coupled_pair() {
        let (x, y) = coupled_pair(9, 252);
        let ids = vec!["x".to_string(), "y".to_string()];
        let (m, diags) =
            causality_matrix(&ids, &[&x, &y], window(252), &GcConfig::default()).unwrap();
        assert!(diags.is_empty());
        assert!(m.verdicts[0][1]);
        assert!(!m.verdicts[0][0] && !m.verdicts[1][1]);
        assert!(m.p_values[0][0].is_nan());
    }

    #[test]
    fn failing_pair_is_recorded_not_fatal() {
        let a = RandomSource::new(1, 0).normals(100);
        let flat = vec![0.0; 100];
        let ids = vec!["a".to_string(), "flat".to_string()];
        let (m, diags) =
            causality_matrix(&ids, &[&a, &flat], window(100), &GcConfig::default()).unwrap();
        assert_eq!(diags.len(), 2);
        assert!(!m.verdicts[0][1] && !m.verdicts[1][0]);
        assert_eq!(m.p_values[0][1], 1.0);
        assert_eq!(m.p_values[1][0], 1.0);
    }

    #[test]
    fn mean_series_of_all_causal_matrices_is_one() {
        let w = window(10);
        let full = CausalityMatrix {
            ids: vec!["a".into(), "b".into(), "c".into()],
            verdicts: vec![
                vec![false, true, true],
                vec![true, false, true],
                vec![true, true, false],
            ],
            p_values: vec![vec![0.0; 3]; 3],
            window: w,
        };
        let mut later = full.clone();
        later.window.label_date = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
        let wc = WindowedCausality {
            matrices: vec![full, later],
            diagnostics: vec![],
        };
        assert_eq!(wc.mean_series().values(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_series_window_count_and_range() {
        let n = 600;
        let cal = business_days(NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), n);
        let ens = Ensemble::from_columns(
            cal.clone(),
            (0..4).map(|i| (format!("s{i}"), RandomSource::new(77, i).normals(n))),
        )
        .unwrap();
        let spec = WindowSpec::default();
        let s = mean_causality_series(&ens, spec, &GcConfig::default()).unwrap();
        assert_eq!(s.len(), windows(&cal, spec).unwrap().len());
        assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn correlation_matrix_entries() {
        let a = RandomSource::new(2, 0).normals(50);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let flat = vec![1.0; 50];
        let ids: Vec<String> = ["a", "dup", "neg", "flat"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let c = correlation_matrix(&ids, &[&a, &a, &neg, &flat]).unwrap();
        assert!((c.values[0][1] - 1.0).abs() < 1e-12);
        assert!((c.values[0][2] + 1.0).abs() < 1e-12);
        assert_eq!(c.values[2][0], c.values[0][2]);
        assert!(c.values[0][3].is_nan());
        assert_eq!(c.values[3][3], 1.0);
        assert_eq!(c.constant_members, vec!["flat".to_string()]);
    }

    #[test]
    fn independent_noise_correlations_are_small() {
        // Fisher z: sd of atanh(r) at n = 252 is 1/sqrt(249); |r| < 0.2 is ~3.2 sd,
        // so a pair exceeds it with probability ~0.0015.
        let trials = 2000;
        let mut exceed = 0;
        for s in 0..trials {
            let a = RandomSource::new(s, 0).normals(252);
            let b = RandomSource::new(s, 1).normals(252);
            let ids = vec!["a".to_string(), "b".to_string()];
            let c = correlation_matrix(&ids, &[&a, &b]).unwrap();
            if c.values[0][1].abs() >= 0.2 {
                exceed += 1;
            }
        }
        assert!((exceed as f64) / (trials as f64) <= 0.01, "{exceed}");
    }

    #[test]
    fn exceedance() {
        let cal = business_days(NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), 4);
        let s = Series::new("m", cal.clone(), vec![0.05; 4]).unwrap();
        assert_eq!(exceedance_fraction(&s, 0.05, 0.01).unwrap(), 0.0);
        let s = Series::new("m", cal, vec![0.05, 0.2, 0.3, 0.06]).unwrap();
        assert_eq!(exceedance_fraction(&s, 0.05, 0.01).unwrap(), 0.5);
        assert!(exceedance_fraction(&s, 0.05, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn f_statistic_scale_invariant(seed in 0u64..5000, sx in 1e-3f64..1e3, sy in 1e-3f64..1e3) {
            let (x, y) = coupled_pair(seed, 120);
            let cfg = GcConfig { tau: 2, tau_prime: 3, alpha: 0.05 };
            let a = gc_test(&x, &y, &cfg).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * sx).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * sy).collect();
            let b = gc_test(&xs, &ys, &cfg).unwrap();
            prop_assert!((a.f_statistic - b.f_statistic).abs() <= 1e-8 * a.f_statistic.abs().max(1.0));
            prop_assert!(a.f_statistic >= 0.0);
        }
    }
}
