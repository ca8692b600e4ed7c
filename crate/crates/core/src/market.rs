//! Geometric Brownian motion, optionally driven by a common external field.
//!
//! Paths use the exact log-normal step with `dt` = one trading day:
//! `X[k+1] = X[k] * exp((mu - sigma^2 / 2) + sigma * Z[k] + beta * h[k])`.
//! With `beta = 0` the driven recursion reproduces the plain one bit for bit.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat::{mean, sample_sd, RandomSource};
use crate::series::{Ensemble, Series};

/// Stream id reserved for drawing per-path couplings, so that the Wiener
/// increments of path `i` (stream `i`) do not depend on whether betas are drawn.
pub const BETA_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    /// Drift per day.
    pub mu: f64,
    /// Volatility per square-root day.
    pub sigma: f64,
    /// Price at the first calendar date.
    pub x0: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0)
            || !(self.x0 > 0.0)
            || !self.mu.is_finite()
            || !self.sigma.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "GBM mu = {}, sigma = {}, x0 = {} (need finite mu, sigma >= 0, x0 > 0)",
                self.mu, self.sigma, self.x0
            )));
        }
        Ok(())
    }

    /// Mean daily log-return, `mu - sigma^2 / 2`.
    pub fn log_drift(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivenGbmParams {
    pub base: GbmParams,
    /// Coupling to the external field, in `[0, 1]`.
    pub beta: f64,
}

/// Increments `h(t)` of the common driver, one per log-return date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalField {
    pub increments: Series,
    pub smoothing_window: usize,
}

impl ExternalField {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.increments.values()
    }
}

fn path(
    id: &str,
    calendar: &[NaiveDate],
    x0: f64,
    log_returns: impl Iterator<Item = f64>,
) -> Result<Series> {
    let mut prices = Vec::with_capacity(calendar.len());
    let mut x = x0;
    prices.push(x);
    for r in log_returns.take(calendar.len() - 1) {
        x *= r.exp();
        prices.push(x);
    }
    Series::new(id, calendar.to_vec(), prices)
}

fn check_calendar(calendar: &[NaiveDate]) -> Result<()> {
    if calendar.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: calendar.len(),
        });
    }
    Ok(())
}

/// Simulates a GBM price path on `calendar` (`calendar.len() - 1` steps).
pub fn simulate_gbm(id: &str, p: &GbmParams, calendar: &[NaiveDate]) -> Result<Series> {
    p.validate()?;
    check_calendar(calendar)?;
    let mut rng = RandomSource::new(p.seed, p.stream_id);
    let drift = p.log_drift();
    path(
        id,
        calendar,
        p.x0,
        std::iter::repeat_with(|| drift + p.sigma * rng.standard_normal()),
    )
}

/// Simulates a GBM path whose log-returns carry `beta * h[k]` on top of the
/// Wiener increments. The field needs exactly one increment per step.
pub fn simulate_driven_gbm(
    id: &str,
    p: &DrivenGbmParams,
    field: &ExternalField,
    calendar: &[NaiveDate],
) -> Result<Series> {
    p.base.validate()?;
    if !(0.0..=1.0).contains(&p.beta) {
        return Err(Error::InvalidParameter(format!(
            "coupling beta = {} outside [0, 1]",
            p.beta
        )));
    }
    check_calendar(calendar)?;
    let steps = calendar.len() - 1;
    if field.len() != steps {
        return Err(Error::FieldLengthMismatch {
            field: field.len(),
            steps,
        });
    }
    let mut rng = RandomSource::new(p.base.seed, p.base.stream_id);
    let drift = p.base.log_drift();
    let sigma = p.base.sigma;
    path(
        id,
        calendar,
        p.base.x0,
        field
            .values()
            .iter()
            .map(|h| drift + sigma * rng.standard_normal() + p.beta * h),
    )
}

/// One coupling per path, uniform on `[0, 1)`, from the reserved beta stream.
pub fn draw_betas(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RandomSource::new(seed, BETA_STREAM);
    (0..n).map(|_| rng.uniform01()).collect()
}

/// Matches GBM drift and volatility to observed daily log-returns:
/// `sigma` is their sample standard deviation and `mu = mean + sigma^2 / 2`.
pub fn calibrate_from_series(
    log_returns: &Series,
    x0: f64,
    seed: u64,
    stream_id: u64,
) -> Result<GbmParams> {
    if log_returns.len() < 30 {
        return Err(Error::TooShort {
            needed: 30,
            got: log_returns.len(),
        });
    }
    let values = log_returns.values();
    let m = mean(values);
    let sd = sample_sd(values);
    let sigma = if sd.is_finite() { sd } else { 0.0 };
    // a constant series can leave rounding noise in the variance
    let sigma = if values.iter().all(|&v| v == values[0]) {
        0.0
    } else {
        sigma
    };
    let params = GbmParams {
        mu: m + 0.5 * sigma * sigma,
        sigma,
        x0,
        seed,
        stream_id,
    };
    params.validate()?;
    Ok(params)
}

/// Centered moving average of odd `width`; near the ends the window shrinks
/// symmetrically to the available half-width.
pub fn centered_moving_average(values: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "smoothing window {width} must be odd and positive"
        )));
    }
    let n = values.len();
    let half = width / 2;
    Ok((0..n)
        .map(|t| {
            let h = half.min(t).min(n - 1 - t);
            let span = &values[t - h..=t + h];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

fn demean(mut values: Vec<f64>) -> Vec<f64> {
    let m = mean(&values);
    values.iter_mut().for_each(|v| *v -= m);
    values
}

/// Estimates the common driver from an ensemble of log-returns: the
/// across-member mean, smoothed with a centered moving average and de-meaned.
pub fn build_external_field(returns: &Ensemble, smoothing_window: usize) -> Result<ExternalField> {
    if returns.n_members() < 2 {
        return Err(Error::InvalidParameter(format!(
            "field estimation needs >= 2 members, got {}",
            returns.n_members()
        )));
    }
    let n = returns.len();
    let m = returns.n_members() as f64;
    let raw: Vec<f64> = (0..n)
        .map(|t| returns.members().iter().map(|s| s.values()[t]).sum::<f64>() / m)
        .collect();
    let smooth = demean(centered_moving_average(&raw, smoothing_window)?);
    Ok(ExternalField {
        increments: Series::new("field", returns.calendar().to_vec(), smooth)?,
        smoothing_window,
    })
}

/// A stretch `[start, end)` of field steps with amplified fluctuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: usize,
    pub end: usize,
    pub amplitude_factor: f64,
}

impl Epoch {
    pub fn contains(&self, t: usize) -> bool {
        (self.start..self.end).contains(&t)
    }

    /// True when `[start, end)` intersects the epoch.
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        start < self.end && self.start < end
    }
}

fn validate_epochs(epochs: &[Epoch], n_steps: usize) -> Result<()> {
    let mut sorted = epochs.to_vec();
    sorted.sort_by_key(|e| e.start);
    for e in &sorted {
        if e.start >= e.end || e.end > n_steps {
            return Err(Error::OverlappingEpochs { n_steps });
        }
        if !(e.amplitude_factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epoch amplitude factor {} must be positive",
                e.amplitude_factor
            )));
        }
    }
    if sorted.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(Error::OverlappingEpochs { n_steps });
    }
    Ok(())
}

/// A controlled driver: Gaussian noise whose standard deviation is
/// `baseline_std` outside the epochs and `amplitude_factor * baseline_std`
/// inside them, smoothed like an estimated field and de-meaned.
///
/// The raw noise is inflated by `sqrt(smoothing_window)` so that the smoothed
/// field keeps the requested standard deviation. Smoothing gives the driver
/// day-to-day persistence; white-noise increments would not be predictable
/// from lagged returns at all.
pub fn synthetic_field(
    epochs: &[Epoch],
    baseline_std: f64,
    dates: &[NaiveDate],
    smoothing_window: usize,
    rng: &mut RandomSource,
) -> Result<ExternalField> {
    let n = dates.len();
    validate_epochs(epochs, n)?;
    if !(baseline_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "baseline std {baseline_std} must be non-negative"
        )));
    }
    let inflate = (smoothing_window as f64).sqrt();
    let raw: Vec<f64> = (0..n)
        .map(|t| {
            let factor = epochs
                .iter()
                .find(|e| e.contains(t))
                .map_or(1.0, |e| e.amplitude_factor);
            rng.standard_normal() * baseline_std * factor * inflate
        })
        .collect();
    let smooth = demean(centered_moving_average(&raw, smoothing_window)?);
    Ok(ExternalField {
        increments: Series::new("field", dates.to_vec(), smooth)?,
        smoothing_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numstat::{pearson_corr, sample_variance};
    use crate::series::{business_days, log_returns};

    fn calendar(n: usize) -> Vec<NaiveDate> {
        business_days(NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), n)
    }

    fn params(mu: f64, sigma: f64, stream_id: u64) -> GbmParams {
        GbmParams {
            mu,
            sigma,
            x0: 100.0,
            seed: 17,
            stream_id,
        }
    }

    fn field_from(values: Vec<f64>) -> ExternalField {
        let n = values.len();
        ExternalField {
            increments: Series::new("field", calendar(n + 1)[1..].to_vec(), values).unwrap(),
            smoothing_window: 1,
        }
    }

    #[test]
    fn deterministic_limits() {
        let s = simulate_gbm("a", &params(0.001, 0.0, 0), &calendar(500)).unwrap();
        for (k, x) in s.values().iter().enumerate() {
            let want = 100.0 * (0.001 * k as f64).exp();
            assert!((x - want).abs() <= 1e-12 * want, "k = {k}");
        }
        let s = simulate_gbm("a", &params(0.0, 0.0, 0), &calendar(50)).unwrap();
        assert!(s.values().iter().all(|&x| x == 100.0));
    }

    #[test]
    fn long_path_recovers_parameters() {
        let p = params(0.0005, 0.02, 3);
        let s = simulate_gbm("a", &p, &calendar(1_000_001)).unwrap();
        let r = log_returns(&s).unwrap();
        let sd = sample_sd(r.values());
        assert!((sd / 0.02 - 1.0).abs() < 0.005, "sd {sd}");
        let se = 0.02 / (1e6f64).sqrt();
        assert!((mean(r.values()) - p.log_drift()).abs() < 3.0 * se);

        let back = calibrate_from_series(&r, 100.0, 0, 0).unwrap();
        assert!((back.sigma / 0.02 - 1.0).abs() < 0.005);
        assert!((back.mu - 0.0005).abs() < 3.0 * se + 1e-6);
    }

    #[test]
    fn zero_coupling_reproduces_plain_path_bitwise() {
        let cal = calendar(1000);
        let plain = simulate_gbm("a", &params(0.0003, 0.015, 4), &cal).unwrap();
        let mut rng = RandomSource::new(1, 9);
        let field = synthetic_field(&[], 0.01, &cal[1..], 11, &mut rng).unwrap();
        let driven = simulate_driven_gbm(
            "a",
            &DrivenGbmParams {
                base: params(0.0003, 0.015, 4),
                beta: 0.0,
            },
            &field,
            &cal,
        )
        .unwrap();
        let bits = |s: &Series| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&plain), bits(&driven));
    }

    #[test]
    fn pure_field_path() {
        let p = DrivenGbmParams {
            base: params(0.0, 0.0, 0),
            beta: 1.0,
        };
        let s = simulate_driven_gbm("a", &p, &field_from(vec![0.1, -0.1]), &calendar(3)).unwrap();
        let x = s.values();
        assert_eq!(x[0], 100.0);
        assert!((x[1] - 100.0 * 0.1f64.exp()).abs() < 1e-12);
        assert!((x[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn field_length_must_match() {
        let p = DrivenGbmParams {
            base: params(0.0, 0.01, 0),
            beta: 0.5,
        };
        assert!(matches!(
            simulate_driven_gbm("a", &p, &field_from(vec![0.0; 5]), &calendar(5)),
            Err(Error::FieldLengthMismatch { field: 5, steps: 4 })
        ));
        let bad = DrivenGbmParams { beta: 1.5, ..p };
        assert!(simulate_driven_gbm("a", &bad, &field_from(vec![0.0; 4]), &calendar(5)).is_err());
    }

    #[test]
    fn calibration_guards_and_constant_input() {
        let cal = calendar(40);
        let flat = Series::new("r", cal.clone(), vec![0.001; 40]).unwrap();
        let p = calibrate_from_series(&flat, 50.0, 1, 2).unwrap();
        assert_eq!(p.sigma, 0.0);
        assert!((p.mu - 0.001).abs() < 1e-15);
        let short = Series::new("r", cal[..10].to_vec(), vec![0.0; 10]).unwrap();
        assert!(matches!(
            calibrate_from_series(&short, 1.0, 0, 0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn moving_average_shrinks_at_edges() {
        let ma = centered_moving_average(&[1.0, 2.0, 3.0, 4.0, 10.0], 3).unwrap();
        assert_eq!(ma, vec![1.0, 2.0, 3.0, 17.0 / 3.0, 10.0]);
        let ma = centered_moving_average(&[1.0, 2.0, 3.0, 4.0, 10.0], 5).unwrap();
        assert_eq!(ma, vec![1.0, 2.0, 4.0, 17.0 / 3.0, 10.0]);
        assert!(centered_moving_average(&[1.0], 4).is_err());
        assert!(centered_moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn identical_members_give_demeaned_returns() {
        let n = 200;
        let cal = calendar(n);
        let r = RandomSource::new(5, 0).normals(n);
        let ens = Ensemble::from_columns(cal, [("a".into(), r.clone()), ("b".into(), r.clone())])
            .unwrap();
        let field = build_external_field(&ens, 1).unwrap();
        let m = mean(&r);
        for (h, x) in field.values().iter().zip(&r) {
            assert!((h - (x - m)).abs() < 1e-14);
        }
        assert!(mean(field.values()).abs() < 1e-12);
    }

    #[test]
    fn field_of_independent_members_shrinks_like_the_mean() {
        let n = 20_000;
        let members = 16;
        let ens = Ensemble::from_columns(
            calendar(n),
            (0..members).map(|i| (format!("s{i}"), RandomSource::new(8, i).normals(n))),
        )
        .unwrap();
        let field = build_external_field(&ens, 1).unwrap();
        let ratio = sample_sd(field.values()) * (members as f64).sqrt();
        // sd of a sample sd at n = 2e4 is ~0.5%
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        assert!(mean(field.values()).abs() < 1e-12);
        assert!(build_external_field(
            &Ensemble::from_columns(calendar(10), [("a".into(), vec![0.0; 10])]).unwrap(),
            1
        )
        .is_err());
    }

    #[test]
    fn synthetic_field_epoch_ratio() {
        // Unsmoothed, the in-epoch sample sd over 400 steps has ~3.5% relative
        // error, so [7, 9] is about a 3.5 sigma band. Smoothing with width w
        // divides the effective sample size by ~w, hence the wider check below.
        let n = 3000;
        let epoch = Epoch {
            start: 1000,
            end: 1400,
            amplitude_factor: 8.0,
        };
        for seed in 0..20 {
            let mut rng = RandomSource::new(seed, 0);
            let f = synthetic_field(&[epoch], 0.01, &calendar(n), 1, &mut rng).unwrap();
            let v = f.values();
            assert!(mean(v).abs() < 1e-12);
            let inside: Vec<f64> = v[epoch.start..epoch.end].to_vec();
            let outside: Vec<f64> = v[..epoch.start]
                .iter()
                .chain(&v[epoch.end..])
                .copied()
                .collect();
            let ratio = sample_sd(&inside) / sample_sd(&outside);
            assert!((7.0..=9.0).contains(&ratio), "seed {seed}: {ratio}");
        }
        let long = Epoch {
            start: 5000,
            end: 15_000,
            amplitude_factor: 8.0,
        };
        let mut rng = RandomSource::new(99, 0);
        let f = synthetic_field(&[long], 0.01, &calendar(30_000), 11, &mut rng).unwrap();
        let v = f.values();
        let inside = sample_sd(&v[long.start + 10..long.end - 10]);
        let outside = sample_sd(&v[long.end + 10..]);
        assert!((inside / outside - 8.0).abs() < 0.8, "{}", inside / outside);
        assert!((outside / 0.01 - 1.0).abs() < 0.05, "{outside}");
    }

    #[test]
    fn unit_amplitude_matches_no_epoch_field() {
        let n = 4000;
        let mut rng = RandomSource::new(3, 0);
        let a = synthetic_field(&[], 0.01, &calendar(n), 1, &mut rng).unwrap();
        let flat = Epoch {
            start: 1000,
            end: 2000,
            amplitude_factor: 1.0,
        };
        let mut rng = RandomSource::new(4, 0);
        let b = synthetic_field(&[flat], 0.01, &calendar(n), 1, &mut rng).unwrap();
        // two-sample variance ratio at n = 4000: 2.5% two-sided band is ~ +-6.4%
        let ratio = sample_variance(a.values()) / sample_variance(b.values());
        assert!((ratio - 1.0).abs() < 0.065, "{ratio}");
    }

    #[test]
    fn epoch_validation() {
        let mut rng = RandomSource::new(3, 0);
        let cal = calendar(100);
        let e = |start, end| Epoch {
            start,
            end,
            amplitude_factor: 2.0,
        };
        assert!(matches!(
            synthetic_field(&[e(10, 30), e(20, 40)], 0.01, &cal, 1, &mut rng),
            Err(Error::OverlappingEpochs { .. })
        ));
        assert!(synthetic_field(&[e(90, 120)], 0.01, &cal, 1, &mut rng).is_err());
        assert!(synthetic_field(&[e(30, 30)], 0.01, &cal, 1, &mut rng).is_err());
        assert!(synthetic_field(&[e(30, 40), e(10, 30)], 0.01, &cal, 1, &mut rng).is_ok());
    }

    /// Two-sample Kolmogorov-Smirnov statistic.
    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn removing_the_driver_leaves_plain_gbm_returns() {
        let n = 10_000;
        let cal = calendar(n + 1);
        let mut rng = RandomSource::new(12, 0);
        let epoch = Epoch {
            start: 2000,
            end: 3000,
            amplitude_factor: 6.0,
        };
        let field = synthetic_field(&[epoch], 0.01, &cal[1..], 11, &mut rng).unwrap();
        let beta = 0.7;
        let driven = simulate_driven_gbm(
            "d",
            &DrivenGbmParams {
                base: params(0.0002, 0.02, 1),
                beta,
            },
            &field,
            &cal,
        )
        .unwrap();
        let residual: Vec<f64> = log_returns(&driven)
            .unwrap()
            .values()
            .iter()
            .zip(field.values())
            .map(|(r, h)| r - beta * h)
            .collect();
        let plain =
            log_returns(&simulate_gbm("p", &params(0.0002, 0.02, 2), &cal).unwrap()).unwrap();
        // 1% critical value of the two-sample KS statistic, n = m = 1e4
        let critical = 1.628 * (2.0 / n as f64).sqrt();
        assert!(ks_statistic(&residual, plain.values()) < critical);
    }

    #[test]
    fn driver_raises_cross_correlation_in_epoch() {
        let n = 2000;
        let cal = calendar(n + 1);
        let epoch = Epoch {
            start: 800,
            end: 1200,
            amplitude_factor: 8.0,
        };
        let mut rng = RandomSource::new(21, 0);
        let field = synthetic_field(&[epoch], 0.003, &cal[1..], 11, &mut rng).unwrap();
        let betas = draw_betas(21, 27);
        let returns: Vec<Vec<f64>> = (0..27)
            .map(|i| {
                let p = DrivenGbmParams {
                    base: GbmParams {
                        stream_id: i,
                        ..params(0.0, 0.02, i)
                    },
                    beta: betas[i as usize],
                };
                let s = simulate_driven_gbm("x", &p, &field, &cal).unwrap();
                log_returns(&s).unwrap().values().to_vec()
            })
            .collect();
        let mean_corr = |range: std::ops::Range<usize>| {
            let mut acc = Vec::new();
            for i in 0..27 {
                for j in (i + 1)..27 {
                    acc.push(
                        pearson_corr(&returns[i][range.clone()], &returns[j][range.clone()])
                            .unwrap(),
                    );
                }
            }
            mean(&acc)
        };
        let inside = mean_corr(800..1200);
        let before = mean_corr(0..400);
        // A single null correlation at n = 400 has sd ~0.05.
        assert!(inside > before + 0.1, "{inside} vs {before}");
    }

    #[test]
    fn recovered_field_tracks_true_field() {
        let n = 21 * 252;
        let cal = calendar(n + 1);
        let mut rng = RandomSource::new(33, 0);
        let field = synthetic_field(&[], 0.01, &cal[1..], 11, &mut rng).unwrap();
        let betas = draw_betas(33, 27);
        let members: Vec<(String, Vec<f64>)> = (0..27u64)
            .map(|i| {
                let p = DrivenGbmParams {
                    base: params(0.0003, 0.02, i),
                    beta: betas[i as usize],
                };
                let s = simulate_driven_gbm("x", &p, &field, &cal).unwrap();
                (format!("s{i}"), log_returns(&s).unwrap().values().to_vec())
            })
            .collect();
        let ens = Ensemble::from_columns(cal[1..].to_vec(), members).unwrap();
        let recovered = build_external_field(&ens, 11).unwrap();
        let truth = centered_moving_average(field.values(), 11).unwrap();
        let r = pearson_corr(recovered.values(), &truth).unwrap();
        assert!(r > 0.9, "{r}");
    }
}
