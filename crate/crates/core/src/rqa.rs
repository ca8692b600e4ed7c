//! Unembedded auto-recurrence quantification.
//!
//! Two times `i != j` recur when `|x_i - x_j| < epsilon`. The line of identity
//! is excluded everywhere: from the number of plot points `N_p = n^2 - n`, from
//! the recurrent count, and from line detection (it breaks vertical runs).
//! `epsilon` is recalibrated per window and per series so that every plot has
//! the same recurrence rate.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::series::{windows, Ensemble, Series, WindowIndex, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqaConfig {
    /// Target recurrence rate in percent.
    pub target_rr: f64,
    /// Minimal diagonal line length.
    pub l_min: usize,
    /// Minimal vertical line length.
    pub v_min: usize,
}

impl Default for RqaConfig {
    fn default() -> Self {
        Self {
            target_rr: 5.0,
            l_min: 2,
            v_min: 2,
        }
    }
}

impl RqaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_rr > 0.0 && self.target_rr < 100.0) || self.l_min < 2 || self.v_min < 2 {
            return Err(Error::InvalidParameter(format!(
                "target_rr = {}, l_min = {}, v_min = {} (need 0 < target_rr < 100, minimal lengths >= 2)",
                self.target_rr, self.l_min, self.v_min
            )));
        }
        Ok(())
    }
}

/// Thresholded distance matrix of a scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrencePlot {
    n: usize,
    recurrent: Vec<bool>,
    loi_excluded: bool,
}

/// Integer counts behind RR, DET and LAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceCounts {
    /// Points on the plot, line of identity excluded.
    pub n_points: usize,
    pub n_rec: usize,
    /// Recurrent points on diagonal lines of length >= l_min.
    pub n_diag: usize,
    /// Recurrent points on vertical lines of length >= v_min.
    pub n_vert: usize,
}

impl RecurrenceCounts {
    pub fn rr(&self) -> f64 {
        100.0 * self.n_rec as f64 / self.n_points as f64
    }

    pub fn det(&self) -> f64 {
        if self.n_rec == 0 {
            0.0
        } else {
            100.0 * self.n_diag as f64 / self.n_rec as f64
        }
    }

    pub fn lam(&self) -> f64 {
        if self.n_rec == 0 {
            0.0
        } else {
            100.0 * self.n_vert as f64 / self.n_rec as f64
        }
    }
}

impl RecurrencePlot {
    pub fn new(values: &[f64], epsilon: f64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::TooShort { needed: 2, got: n });
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "recurrence threshold {epsilon} must be positive"
            )));
        }
        let mut recurrent = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                if (values[i] - values[j]).abs() < epsilon {
                    recurrent[i * n + j] = true;
                    recurrent[j * n + i] = true;
                }
            }
        }
        Ok(Self {
            n,
            recurrent,
            loi_excluded: true,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn loi_excluded(&self) -> bool {
        self.loi_excluded
    }

    pub fn is_recurrent(&self, i: usize, j: usize) -> bool {
        self.recurrent[i * self.n + j]
    }

    /// Counts recurrent points and line membership.
    ///
    /// Diagonals are scanned above the line of identity only and doubled,
    /// which relies on the plot being symmetric.
    pub fn counts(&self, l_min: usize, v_min: usize) -> RecurrenceCounts {
        let n = self.n;
        let n_rec = self.recurrent.iter().filter(|&&r| r).count();

        let mut upper_diag = 0;
        for offset in 1..n {
            upper_diag += line_points(
                (0..n - offset).map(|i| self.is_recurrent(i, i + offset)),
                l_min,
            );
        }

        let mut n_vert = 0;
        for j in 0..n {
            n_vert += line_points((0..n).map(|i| self.is_recurrent(i, j)), v_min);
        }

        RecurrenceCounts {
            n_points: n * n - n,
            n_rec,
            n_diag: 2 * upper_diag,
            n_vert,
        }
    }
}

/// Points belonging to runs of `true` of length >= `min_len`.
fn line_points(cells: impl Iterator<Item = bool>, min_len: usize) -> usize {
    let mut total = 0;
    let mut run = 0;
    for cell in cells {
        if cell {
            run += 1;
        } else {
            if run >= min_len {
                total += run;
            }
            run = 0;
        }
    }
    if run >= min_len {
        total += run;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub epsilon: f64,
    /// Recurrence rate (percent) actually produced by `epsilon`.
    pub achieved_rr: f64,
}

/// Chooses `epsilon` so that the recurrence rate is as close to `target_rr`
/// (percent) as the distance multiset allows.
///
/// With `q = round(target_rr / 100 * N_p)`, epsilon is the midpoint of the q-th
/// and (q+1)-th smallest ordered-pair distances. Each distance occurs twice
/// among ordered pairs, so for odd `q` those two coincide and the strict
/// inequality yields `q - 1` recurrences. When the midpoint is 0 (a block of
/// zero distances) epsilon becomes half the smallest positive distance, which
/// admits every zero-distance pair.
pub fn calibrate_epsilon(values: &[f64], target_rr: f64) -> Result<Calibration> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if !(target_rr > 0.0 && target_rr < 100.0) {
        return Err(Error::InvalidParameter(format!(
            "target recurrence rate {target_rr} must lie in (0, 100)"
        )));
    }
    let mut dist = pair_distances(values);
    let max = dist.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateDistances);
    }

    let n_points = n * n - n;
    let q = ((target_rr / 100.0) * n_points as f64).round() as usize;
    // k-th smallest ordered distance (1-based) is the ((k - 1) / 2)-th unordered one.
    let ordered = |dist: &mut Vec<f64>, k: usize| -> f64 {
        let (_, v, _) = dist.select_nth_unstable_by((k - 1) / 2, f64::total_cmp);
        *v
    };
    let mut epsilon = if q >= n_points {
        2.0 * max
    } else {
        let lower = if q == 0 { 0.0 } else { ordered(&mut dist, q) };
        let upper = ordered(&mut dist, q + 1);
        0.5 * (lower + upper)
    };
    if epsilon == 0.0 {
        let min_positive = dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        epsilon = 0.5 * min_positive;
    }
    let recurrent = 2 * dist.iter().filter(|&&d| d < epsilon).count();
    Ok(Calibration {
        epsilon,
        achieved_rr: 100.0 * recurrent as f64 / n_points as f64,
    })
}

fn pair_distances(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((values[i] - values[j]).abs());
        }
    }
    out
}

/// RR, DET and LAM (percent) of one window at a fixed threshold.
pub fn recurrence_quantifiers(
    values: &[f64],
    epsilon: f64,
    l_min: usize,
    v_min: usize,
) -> Result<RecurrenceCounts> {
    if l_min < 2 || v_min < 2 {
        return Err(Error::InvalidParameter(format!(
            "minimal line lengths must be >= 2 (l_min = {l_min}, v_min = {v_min})"
        )));
    }
    Ok(RecurrencePlot::new(values, epsilon)?.counts(l_min, v_min))
}

/// Quantifiers of one series in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqaSummary {
    pub series_id: String,
    pub window: WindowIndex,
    pub rr: f64,
    pub det: f64,
    pub lam: f64,
    pub epsilon: f64,
    pub achieved_rr: f64,
}

/// Calibrates and quantifies one window of one series.
pub fn window_summary(
    series_id: &str,
    values: &[f64],
    window: WindowIndex,
    cfg: &RqaConfig,
) -> Result<RqaSummary> {
    let cal = calibrate_epsilon(values, cfg.target_rr)?;
    let counts = recurrence_quantifiers(values, cal.epsilon, cfg.l_min, cfg.v_min)?;
    Ok(RqaSummary {
        series_id: series_id.to_string(),
        window,
        rr: counts.rr(),
        det: counts.det(),
        lam: counts.lam(),
        epsilon: cal.epsilon,
        achieved_rr: cal.achieved_rr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedRqa {
    /// Across-member mean DET per window.
    pub mean_det: Series,
    /// Across-member mean LAM per window.
    pub mean_lam: Series,
    /// Window-major, member-minor.
    pub table: Vec<RqaSummary>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Windowed ARQA over every member of an ensemble of log-returns.
///
/// Members whose window cannot be calibrated are left out of that window's
/// mean; a window with no usable member is left out of the mean series.
pub fn windowed_arqa(returns: &Ensemble, spec: WindowSpec, cfg: &RqaConfig) -> Result<WindowedRqa> {
    cfg.validate()?;
    let ids = returns.ids();
    let mut table = Vec::new();
    let mut diagnostics = Vec::new();
    let mut dates = Vec::new();
    let mut det = Vec::new();
    let mut lam = Vec::new();

    for (k, w) in windows(returns.calendar(), spec)?.into_iter().enumerate() {
        let slices = returns.window_slices(&w);
        let results: Vec<Result<RqaSummary>> = slices
            .par_iter()
            .zip(ids.par_iter())
            .map(|(values, id)| window_summary(id, values, w, cfg))
            .collect();
        let mut used = Vec::new();
        for (id, res) in ids.iter().zip(results) {
            match res {
                Ok(s) => used.push(s),
                Err(e) => {
                    warn!("rqa {id} in window at {}: {e}", w.label_date);
                    diagnostics
                        .push(Diagnostic::new("rqa", id, e.to_string()).in_window(k, w.label_date));
                }
            }
        }
        if used.is_empty() {
            diagnostics.push(
                Diagnostic::new("rqa", "window", "no member could be quantified")
                    .in_window(k, w.label_date),
            );
            continue;
        }
        let m = used.len() as f64;
        dates.push(w.label_date);
        det.push(used.iter().map(|s| s.det).sum::<f64>() / m);
        lam.push(used.iter().map(|s| s.lam).sum::<f64>() / m);
        table.extend(used);
    }
    if dates.is_empty() {
        return Err(Error::DegenerateDistances.context("every window"));
    }
    Ok(WindowedRqa {
        mean_det: Series::new("mean_det", dates.clone(), det)?,
        mean_lam: Series::new("mean_lam", dates, lam)?,
        table,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numstat::RandomSource;
    use crate::series::business_days;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    /// Straightforward enumeration over the full matrix, every diagonal on
    /// both sides of the line of identity and every column.
    fn brute_force(values: &[f64], eps: f64, l_min: usize, v_min: usize) -> RecurrenceCounts {
        let n = values.len();
        let rec = |i: usize, j: usize| i != j && (values[i] - values[j]).abs() < eps;
        let mut n_rec = 0;
        for i in 0..n {
            for j in 0..n {
                if rec(i, j) {
                    n_rec += 1;
                }
            }
        }
        let runs = |cells: Vec<bool>, min: usize| {
            let mut total = 0;
            let mut i = 0;
            while i < cells.len() {
                if cells[i] {
                    let start = i;
                    while i < cells.len() && cells[i] {
                        i += 1;
                    }
                    if i - start >= min {
                        total += i - start;
                    }
                } else {
                    i += 1;
                }
            }
            total
        };
        let mut n_diag = 0;
        for k in -(n as isize - 1)..=(n as isize - 1) {
            let cells: Vec<bool> = (0..n as isize)
                .filter_map(|i| {
                    let j = i + k;
                    (0..n as isize)
                        .contains(&j)
                        .then(|| rec(i as usize, j as usize))
                })
                .collect();
            n_diag += runs(cells, l_min);
        }
        let mut n_vert = 0;
        for j in 0..n {
            n_vert += runs((0..n).map(|i| rec(i, j)).collect(), v_min);
        }
        RecurrenceCounts {
            n_points: n * n - n,
            n_rec,
            n_diag,
            n_vert,
        }
    }

    #[test]
    fn hand_example() {
        let x = [0.0, 1.0, 0.0, 1.0, 0.0];
        let c = recurrence_quantifiers(&x, 0.5, 2, 2).unwrap();
        assert_eq!((c.n_points, c.n_rec, c.n_diag, c.n_vert), (20, 8, 6, 0));
        assert_eq!(c.rr(), 40.0);
        assert_eq!(c.det(), 75.0);
        assert_eq!(c.lam(), 0.0);
    }

    #[test]
    fn no_recurrences() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let c = recurrence_quantifiers(&x, 0.5, 2, 2).unwrap();
        assert_eq!((c.rr(), c.det(), c.lam()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_window_recurs_everywhere() {
        // With the line of identity removed, the two corner cells are
        // diagonals of length 1 and columns 1 and n-2 each start or end with
        // a single cell, so DET and LAM fall 2 points short of N_rec.
        let n = 10;
        let c = recurrence_quantifiers(&vec![3.0; n], 0.1, 2, 2).unwrap();
        assert_eq!(c.n_rec, n * n - n);
        assert_eq!(c.rr(), 100.0);
        assert_eq!(c.n_diag, c.n_rec - 2);
        assert_eq!(c.n_vert, c.n_rec - 2);
        assert_eq!(c, brute_force(&vec![3.0; n], 0.1, 2, 2));
    }

    #[test]
    fn calibration_hand_example() {
        let cal = calibrate_epsilon(&[0.0, 1.0, 0.0, 1.0, 0.0], 40.0).unwrap();
        assert!(cal.epsilon > 0.0 && cal.epsilon < 1.0);
        assert_eq!(cal.achieved_rr, 40.0);
    }

    #[test]
    fn calibration_rejects_constant_window() {
        assert!(matches!(
            calibrate_epsilon(&[2.0; 30], 5.0),
            Err(Error::DegenerateDistances)
        ));
        assert!(calibrate_epsilon(&[1.0, 2.0], 0.0).is_err());
        assert!(calibrate_epsilon(&[1.0, 2.0], 100.0).is_err());
    }

    #[test]
    fn calibration_hits_target_for_continuous_data() {
        for seed in 0..50 {
            let x = RandomSource::new(seed, 0).normals(252);
            let cal = calibrate_epsilon(&x, 5.0).unwrap();
            assert!(
                (4.5..=5.5).contains(&cal.achieved_rr),
                "{}",
                cal.achieved_rr
            );
            let c = recurrence_quantifiers(&x, cal.epsilon, 2, 2).unwrap();
            assert_eq!(c.rr(), cal.achieved_rr);
        }
    }

    #[test]
    fn calibration_with_zero_distance_block() {
        // 12 equal values give 132 ordered zero distances, far beyond 5% of 29*28.
        let mut x = vec![0.0; 12];
        x.extend((1..=17).map(|i| i as f64));
        let cal = calibrate_epsilon(&x, 5.0).unwrap();
        assert_eq!(cal.epsilon, 0.5);
        assert!((cal.achieved_rr - 100.0 * 132.0 / 812.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_extremes() {
        let x = [0.0, 1.0, 3.0];
        // q = round(0.99 * 6) = 6 = N_p: everything recurs
        let cal = calibrate_epsilon(&x, 99.0).unwrap();
        assert_eq!(cal.achieved_rr, 100.0);
        // q = 0: nothing recurs
        let cal = calibrate_epsilon(&x, 1.0).unwrap();
        assert_eq!(cal.achieved_rr, 0.0);
        assert!(cal.epsilon > 0.0);
    }

    #[test]
    fn production_counts_match_brute_force() {
        let mut rng = RandomSource::new(2718, 0);
        for _ in 0..300 {
            let n = 8 + (rng.uniform01() * 57.0) as usize;
            // coarse values create ties and long lines
            let x: Vec<f64> = (0..n)
                .map(|_| (rng.standard_normal() * 3.0).round())
                .collect();
            let eps = 0.1 + 3.0 * rng.uniform01();
            let l_min = 2 + (rng.uniform01() * 3.0) as usize;
            let v_min = 2 + (rng.uniform01() * 3.0) as usize;
            let got = recurrence_quantifiers(&x, eps, l_min, v_min).unwrap();
            assert_eq!(
                got,
                brute_force(&x, eps, l_min, v_min),
                "x = {x:?}, eps = {eps}"
            );
        }
    }

    #[test]
    fn plot_is_symmetric_and_diagonal_doubling_holds() {
        let x = RandomSource::new(5, 0).normals(40);
        let rp = RecurrencePlot::new(&x, 0.4).unwrap();
        assert!(rp.loi_excluded());
        for i in 0..40 {
            assert!(!rp.is_recurrent(i, i));
            for j in 0..40 {
                assert_eq!(rp.is_recurrent(i, j), rp.is_recurrent(j, i));
            }
        }
        let mut lower = 0;
        for offset in 1..40 {
            lower += line_points((0..40 - offset).map(|j| rp.is_recurrent(j + offset, j)), 2);
        }
        assert_eq!(rp.counts(2, 2).n_diag, 2 * lower);
    }

    #[test]
    fn shuffling_keeps_rr_but_changes_det() {
        let x: Vec<f64> = (0..200).map(|t| (t as f64 * 0.05).sin()).collect();
        let mut shuffled = x.clone();
        RandomSource::new(1, 0).shuffle(&mut shuffled);
        let a = window_summary("x", &x, dummy_window(), &RqaConfig::default()).unwrap();
        let b = window_summary("x", &shuffled, dummy_window(), &RqaConfig::default()).unwrap();
        assert_eq!(a.rr, b.rr);
        assert_eq!(a.epsilon, b.epsilon);
        assert!(a.det > b.det + 20.0, "{} vs {}", a.det, b.det);
    }

    fn dummy_window() -> WindowIndex {
        WindowIndex {
            start: 0,
            end: 0,
            label_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        }
    }

    #[test]
    fn single_member_ensemble_mean_equals_member() {
        let n = 400;
        let cal = business_days(NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(), n);
        let ens =
            Ensemble::from_columns(cal, [("a".to_string(), RandomSource::new(3, 0).normals(n))])
                .unwrap();
        let out = windowed_arqa(
            &ens,
            WindowSpec::new(100, 50).unwrap(),
            &RqaConfig::default(),
        )
        .unwrap();
        assert_eq!(out.mean_det.len(), 7);
        for (k, s) in out.table.iter().enumerate() {
            assert_eq!(out.mean_det.values()[k], s.det);
            assert_eq!(out.mean_lam.values()[k], s.lam);
        }
    }

    #[test]
    fn degenerate_member_is_excluded_from_mean() {
        let n = 300;
        let cal = business_days(NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(), n);
        let ens = Ensemble::from_columns(
            cal,
            [
                ("a".to_string(), RandomSource::new(3, 0).normals(n)),
                ("flat".to_string(), vec![0.0; n]),
            ],
        )
        .unwrap();
        let out = windowed_arqa(
            &ens,
            WindowSpec::new(100, 100).unwrap(),
            &RqaConfig::default(),
        )
        .unwrap();
        assert_eq!(out.diagnostics.len(), 3);
        assert!(out.table.iter().all(|s| s.series_id == "a"));
        assert_eq!(out.mean_det.values()[0], out.table[0].det);
    }

    proptest! {
        #[test]
        fn affine_rescaling(seed in 0u64..10_000, scale in 0.001f64..1000.0, n in 10usize..80) {
            let x = RandomSource::new(seed, 0).normals(n);
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let a = window_summary("x", &x, dummy_window(), &RqaConfig::default()).unwrap();
            let b = window_summary("y", &y, dummy_window(), &RqaConfig::default()).unwrap();
            prop_assert!((b.epsilon - scale * a.epsilon).abs() <= 1e-12 * b.epsilon);
            prop_assert_eq!((a.rr, a.det, a.lam), (b.rr, b.det, b.lam));
        }

        #[test]
        fn quantifiers_bounded(seed in 0u64..10_000, n in 2usize..60, eps in 0.01f64..3.0) {
            let x = RandomSource::new(seed, 0).normals(n);
            let c = recurrence_quantifiers(&x, eps, 2, 2).unwrap();
            for v in [c.rr(), c.det(), c.lam()] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            if c.n_rec == 0 {
                prop_assert_eq!((c.det(), c.lam()), (0.0, 0.0));
            }
        }
    }
}
