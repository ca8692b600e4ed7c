//! The `ingest`, `granger`, `rqa`, `simulate`, `build-field` and `replicate`
//! runs. Each reads a [`RunConfig`], writes into `cfg.out` and returns a
//! [`ResultBundle`] describing what it wrote.

use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::granger::{
    correlation_matrix, exceedance_fraction, windowed_causality, WindowedCausality,
};
use crate::market::{
    build_external_field, calibrate_from_series, centered_moving_average, draw_betas,
    simulate_driven_gbm, simulate_gbm, synthetic_field, DrivenGbmParams, Epoch, ExternalField,
    GbmParams,
};
use crate::numstat::{mean, pearson_corr, sample_sd, RandomSource};
use crate::pipeline::ingest::{ingest_csv, read_price_file, IngestReport};
use crate::pipeline::output::{
    columns_csv, ensemble_csv, fmt_real, matrix_csv, run_metadata, series_csv, OutputDir,
};
use crate::pipeline::{Coupling, RunConfig};
use crate::rqa::{windowed_arqa, WindowedRqa};
use crate::series::{business_days, windows, Ensemble, Series, WindowIndex};
use crate::stationarity::{adf_stationarity, Significance};

/// Stream of the run seed reserved for the synthetic field.
pub const FIELD_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub command: String,
    pub out_dir: PathBuf,
    /// Paths relative to `out_dir`, in write order.
    pub files: Vec<PathBuf>,
    pub diagnostics: Vec<Diagnostic>,
    pub summary: Map<String, Value>,
}

struct Run {
    command: &'static str,
    out: OutputDir,
    diagnostics: Vec<Diagnostic>,
    summary: Map<String, Value>,
}

impl Run {
    fn start(command: &'static str, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = OutputDir::create(&cfg.out, run_metadata(command, cfg))?;
        Ok(Self {
            command,
            out,
            diagnostics: Vec::new(),
            summary: Map::new(),
        })
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.to_string(),
            serde_json::to_value(value).expect("summary value serializes"),
        );
    }

    fn finish(mut self) -> Result<ResultBundle> {
        self.out.diagnostics(&self.diagnostics)?;
        let out_dir = self.out.root().to_path_buf();
        let summary = self.summary.clone();
        let files = self.out.finish(self.summary)?;
        Ok(ResultBundle {
            command: self.command.to_string(),
            out_dir,
            files,
            diagnostics: self.diagnostics,
            summary,
        })
    }
}

fn relabel(diagnostics: Vec<Diagnostic>, label: &str) -> impl Iterator<Item = Diagnostic> + '_ {
    diagnostics.into_iter().map(move |mut d| {
        d.stage = format!("{label}/{}", d.stage);
        d
    })
}

/// Reads and aligns `cfg.inputs`.
pub fn load_prices(cfg: &RunConfig) -> Result<(Ensemble, IngestReport)> {
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no inputs given".into()));
    }
    ingest_csv(&cfg.inputs)
}

fn ingest_diagnostics(report: &IngestReport) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = report
        .rejected
        .iter()
        .map(|r| Diagnostic::new("ingest", r.id.clone(), r.reason.clone()))
        .collect();
    if !report.dropped_dates.is_empty() {
        out.push(Diagnostic::new(
            "ingest",
            "calendar",
            format!(
                "{} dates dropped by the inner join",
                report.dropped_dates.len()
            ),
        ));
    }
    out
}

/// GBM parameters fitted to every member, path `i` on stream `i`.
pub fn calibrate_members(prices: &Ensemble, seed: u64) -> Result<Vec<GbmParams>> {
    let returns = prices.log_returns()?;
    prices
        .members()
        .iter()
        .zip(returns.members())
        .enumerate()
        .map(|(i, (p, r))| {
            calibrate_from_series(r, p.values()[0], seed, i as u64)
                .map_err(|e| e.context(format!("calibrating {}", p.id())))
        })
        .collect()
}

/// Plain GBM paths, one per parameter set.
pub fn simulate_plain(
    ids: &[String],
    params: &[GbmParams],
    calendar: &[NaiveDate],
) -> Result<Ensemble> {
    let members = ids
        .par_iter()
        .zip(params.par_iter())
        .map(|(id, p)| simulate_gbm(id, p, calendar))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// GBM paths coupled to `field` with the given betas.
pub fn simulate_driven(
    ids: &[String],
    params: &[GbmParams],
    betas: &[f64],
    field: &ExternalField,
    calendar: &[NaiveDate],
) -> Result<Ensemble> {
    let members = ids
        .par_iter()
        .zip(params.par_iter())
        .zip(betas.par_iter())
        .map(|((id, &base), &beta)| {
            simulate_driven_gbm(id, &DrivenGbmParams { base, beta }, field, calendar)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

pub fn betas(cfg: &RunConfig, n: usize) -> Vec<f64> {
    match cfg.beta {
        Coupling::Random => draw_betas(cfg.seed, n),
        Coupling::Fixed(b) => vec![b; n],
    }
}

pub fn simulated_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("sim{i:0width$}")).collect()
}

/// `cfg.steps + 1` business days from `cfg.start_date`.
pub fn synthetic_calendar(cfg: &RunConfig) -> Vec<NaiveDate> {
    business_days(cfg.start_date, cfg.steps + 1)
}

/// The synthetic driver for a price calendar (one increment per step).
pub fn synthetic_driver(cfg: &RunConfig, calendar: &[NaiveDate]) -> Result<ExternalField> {
    let mut rng = RandomSource::new(cfg.seed, FIELD_STREAM);
    synthetic_field(
        &cfg.epochs.0,
        cfg.field_std,
        &calendar[1..],
        cfg.smoothing_window,
        &mut rng,
    )
}

fn previous_business_day(d: NaiveDate) -> NaiveDate {
    let mut d = d - Duration::days(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d -= Duration::days(1);
    }
    d
}

/// Reads a `date,value` field file. The returned price calendar starts one
/// business day before the first field date.
pub fn read_field(path: &Path, smoothing_window: usize) -> Result<(ExternalField, Vec<NaiveDate>)> {
    let mut columns = read_price_file(path)?;
    if columns.len() != 1 {
        return Err(Error::Parse {
            file: path.to_path_buf(),
            line: 1,
            message: format!("expected one value column, found {}", columns.len()),
        });
    }
    let points = columns.remove(0).points;
    let dates: Vec<NaiveDate> = points.keys().copied().collect();
    let values: Vec<f64> = points.values().copied().collect();
    let first = *dates.first().ok_or_else(|| Error::Parse {
        file: path.to_path_buf(),
        line: 2,
        message: "field file has no rows".into(),
    })?;
    let mut calendar = vec![previous_business_day(first)];
    calendar.extend(&dates);
    let field = ExternalField {
        increments: Series::new("field", dates, values)?,
        smoothing_window,
    };
    Ok((field, calendar))
}

/// Both windowed analyses of one price ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub windows: Vec<WindowIndex>,
    pub causality: WindowedCausality,
    pub rqa: WindowedRqa,
}

pub fn analyze(prices: &Ensemble, cfg: &RunConfig) -> Result<Analysis> {
    let returns = prices.log_returns()?;
    Ok(Analysis {
        windows: windows(returns.calendar(), cfg.window_spec())?,
        causality: windowed_causality(&returns, cfg.window_spec(), &cfg.gc())
            .map_err(|e| e.context("granger"))?,
        rqa: windowed_arqa(&returns, cfg.window_spec(), &cfg.rqa())
            .map_err(|e| e.context("rqa"))?,
    })
}

/// How far a windowed series rises inside one epoch relative to the windows
/// that touch no epoch at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochContrast {
    pub epoch: Epoch,
    pub peak: f64,
    pub peak_date: NaiveDate,
    pub out_mean: f64,
    pub out_sd: f64,
    /// `(peak - out_mean) / out_sd`.
    pub z: f64,
}

/// Contrasts per epoch; `None` when fewer than two windows avoid every epoch
/// or an epoch overlaps no window of `series`.
pub fn epoch_contrast(
    series: &Series,
    windows: &[WindowIndex],
    epochs: &[Epoch],
) -> Option<Vec<EpochContrast>> {
    let located: Vec<(WindowIndex, f64)> = series
        .dates()
        .iter()
        .zip(series.values())
        .filter_map(|(d, &v)| windows.iter().find(|w| w.label_date == *d).map(|w| (*w, v)))
        .collect();
    let outside: Vec<f64> = located
        .iter()
        .filter(|(w, _)| !epochs.iter().any(|e| e.overlaps(w.start, w.end)))
        .map(|&(_, v)| v)
        .collect();
    if outside.len() < 2 {
        return None;
    }
    let (out_mean, out_sd) = (mean(&outside), sample_sd(&outside));
    epochs
        .iter()
        .map(|e| {
            let (w, peak) = located
                .iter()
                .filter(|(w, _)| e.overlaps(w.start, w.end))
                .copied()
                .max_by(|a, b| a.1.total_cmp(&b.1))?;
            Some(EpochContrast {
                epoch: *e,
                peak,
                peak_date: w.label_date,
                out_mean,
                out_sd,
                z: (peak - out_mean) / out_sd,
            })
        })
        .collect()
}

/// Standard deviation inside each epoch divided by the standard deviation
/// outside all of them.
pub fn epoch_std_ratios(field: &ExternalField, epochs: &[Epoch]) -> Option<Vec<f64>> {
    let values = field.values();
    if epochs.iter().any(|e| e.end > values.len()) {
        return None;
    }
    let outside: Vec<f64> = (0..values.len())
        .filter(|&t| !epochs.iter().any(|e| e.contains(t)))
        .map(|t| values[t])
        .collect();
    if outside.len() < 2 {
        return None;
    }
    let base = sample_sd(&outside);
    Some(
        epochs
            .iter()
            .map(|e| sample_sd(&values[e.start..e.end]) / base)
            .collect(),
    )
}

fn window_json(k: usize, w: &WindowIndex, calendar: &[NaiveDate]) -> Value {
    json!({
        "index": k,
        "start": w.start,
        "end": w.end,
        "start_date": calendar[w.start],
        "end_date": calendar[w.end - 1],
        "label_date": w.label_date,
    })
}

fn write_series(run: &mut Run, rel: &str, series: &Series, what: &str) -> Result<()> {
    run.out
        .csv(rel, &series_csv(series), json!({ "content": what }))
}

fn params_csv(ids: &[String], params: &[GbmParams], betas: &[f64]) -> String {
    let mut out = String::from("id,mu,sigma,x0,beta,seed,stream_id\n");
    for ((id, p), b) in ids.iter().zip(params).zip(betas) {
        out.push_str(&format!(
            "{id},{},{},{},{},{},{}\n",
            fmt_real(p.mu),
            fmt_real(p.sigma),
            fmt_real(p.x0),
            fmt_real(*b),
            p.seed,
            p.stream_id
        ));
    }
    out
}

/// Mean and sample sd of a series, or `None` for fewer than two values.
fn moments(series: &Series) -> Option<(f64, f64)> {
    (series.len() >= 2).then(|| (mean(series.values()), sample_sd(series.values())))
}

pub fn run_ingest(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("ingest", cfg)?;
    let (prices, report) = load_prices(cfg)?;
    run.diagnostics.extend(ingest_diagnostics(&report));
    run.out.csv(
        "prices.csv",
        &ensemble_csv(&prices),
        json!({ "content": "aligned prices" }),
    )?;
    run.out.json("ingest_report.json", &report)?;
    run.note("members", prices.n_members());
    run.note("dates", prices.len());
    run.note("rejected", report.rejected.len());
    run.note("dropped_dates", report.dropped_dates.len());
    run.finish()
}

fn stationarity_diagnostics(
    returns: &Ensemble,
    windows: &[WindowIndex],
    lag: usize,
) -> Vec<Diagnostic> {
    windows
        .par_iter()
        .enumerate()
        .flat_map_iter(|(k, w)| {
            returns
                .members()
                .iter()
                .filter_map(move |m| {
                    let message = match adf_stationarity(&m.values()[w.start..w.end], lag) {
                        Ok(r) if r.rejects_at(Significance::FivePercent) => return None,
                        Ok(r) => format!(
                            "unit root not rejected at 5% (ADF t = {})",
                            fmt_real(r.statistic)
                        ),
                        Err(e) => format!("ADF test failed: {e}"),
                    };
                    Some(
                        Diagnostic::new("stationarity", m.id(), message).in_window(k, w.label_date),
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn run_granger(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("granger", cfg)?;
    let (prices, report) = load_prices(cfg)?;
    run.diagnostics.extend(ingest_diagnostics(&report));
    let returns = prices.log_returns()?;
    let wins = windows(returns.calendar(), cfg.window_spec())?;
    let gc = windowed_causality(&returns, cfg.window_spec(), &cfg.gc())?;
    run.diagnostics
        .extend(stationarity_diagnostics(&returns, &wins, cfg.adf_lag));
    run.diagnostics.extend(gc.diagnostics.iter().cloned());

    let mean_series = gc.mean_series();
    write_series(
        &mut run,
        "mean_causality.csv",
        &mean_series,
        "mean pairwise causality per window",
    )?;

    let ids = returns.ids();
    let cal = returns.calendar();
    let mut index = String::from("index,start_date,end_date,label_date,causality_density\n");
    for (k, (w, m)) in wins.iter().zip(&gc.matrices).enumerate() {
        index.push_str(&format!(
            "{k},{},{},{},{}\n",
            cal[w.start],
            cal[w.end - 1],
            w.label_date,
            fmt_real(m.density())
        ));
        let corr = correlation_matrix(&ids, &returns.window_slices(w))
            .map_err(|e| e.context(format!("correlation, window {k}")))?;
        let meta = window_json(k, w, cal);
        run.out.csv(
            &format!("matrices/causality_{k:03}.csv"),
            &matrix_csv(&ids, |i, j| u8::from(m.verdicts[i][j]).to_string()),
            json!({ "content": "causality verdicts, row causes column", "window": meta }),
        )?;
        run.out.csv(
            &format!("matrices/pvalues_{k:03}.csv"),
            &matrix_csv(&ids, |i, j| fmt_real(m.p_values[i][j])),
            json!({ "content": "F-test p-values, row causes column", "window": meta }),
        )?;
        run.out.csv(
            &format!("matrices/correlation_{k:03}.csv"),
            &matrix_csv(&ids, |i, j| fmt_real(corr.values[i][j])),
            json!({ "content": "Pearson correlation of log-returns", "window": meta }),
        )?;
    }
    run.out
        .csv("windows.csv", &index, json!({ "content": "window index" }))?;
    run.note("members", ids.len());
    run.note("windows", wins.len());
    if let Some((m, sd)) = moments(&mean_series) {
        run.note("mean_causality_mean", m);
        run.note("mean_causality_sd", sd);
    }

    if cfg.baseline {
        let params = calibrate_members(&prices, cfg.seed)?;
        let baseline = simulate_plain(&ids, &params, prices.calendar())?;
        let base_gc = windowed_causality(&baseline.log_returns()?, cfg.window_spec(), &cfg.gc())
            .map_err(|e| e.context("baseline"))?;
        run.diagnostics
            .extend(relabel(base_gc.diagnostics.clone(), "baseline"));
        let base_series = base_gc.mean_series();
        write_series(
            &mut run,
            "baseline_mean_causality.csv",
            &base_series,
            "mean pairwise causality of calibrated GBM paths",
        )?;
        if let Some((m, sd)) = moments(&base_series) {
            run.note("baseline_mean", m);
            run.note("baseline_sd", sd);
            match exceedance_fraction(&mean_series, m, sd) {
                Ok(f) => run.note("exceedance_fraction", f),
                Err(e) => {
                    run.diagnostics
                        .push(Diagnostic::new("baseline", "exceedance", e.to_string()))
                }
            }
        }
    }
    run.finish()
}

fn rqa_table_csv(rqa: &WindowedRqa, calendar: &[NaiveDate]) -> String {
    let mut out =
        String::from("series_id,label_date,start_date,end_date,rr,det,lam,epsilon,achieved_rr\n");
    for s in &rqa.table {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.series_id,
            s.window.label_date,
            calendar[s.window.start],
            calendar[s.window.end - 1],
            fmt_real(s.rr),
            fmt_real(s.det),
            fmt_real(s.lam),
            fmt_real(s.epsilon),
            fmt_real(s.achieved_rr)
        ));
    }
    out
}

pub fn run_rqa(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("rqa", cfg)?;
    let (prices, report) = load_prices(cfg)?;
    run.diagnostics.extend(ingest_diagnostics(&report));
    let returns = prices.log_returns()?;
    let rqa = windowed_arqa(&returns, cfg.window_spec(), &cfg.rqa())?;
    run.diagnostics.extend(rqa.diagnostics.iter().cloned());
    write_series(
        &mut run,
        "mean_det.csv",
        &rqa.mean_det,
        "mean DET (%) per window",
    )?;
    write_series(
        &mut run,
        "mean_lam.csv",
        &rqa.mean_lam,
        "mean LAM (%) per window",
    )?;
    run.out.csv(
        "rqa_windows.csv",
        &rqa_table_csv(&rqa, returns.calendar()),
        json!({ "content": "per-member, per-window quantifiers" }),
    )?;
    run.note("members", returns.n_members());
    run.note("windows", rqa.mean_det.len());

    if cfg.baseline {
        let params = calibrate_members(&prices, cfg.seed)?;
        let baseline = simulate_plain(&returns.ids(), &params, prices.calendar())?;
        let base = windowed_arqa(&baseline.log_returns()?, cfg.window_spec(), &cfg.rqa())
            .map_err(|e| e.context("baseline"))?;
        run.diagnostics
            .extend(relabel(base.diagnostics.clone(), "baseline"));
        write_series(
            &mut run,
            "baseline_mean_det.csv",
            &base.mean_det,
            "mean DET (%) of calibrated GBM paths",
        )?;
        write_series(
            &mut run,
            "baseline_mean_lam.csv",
            &base.mean_lam,
            "mean LAM (%) of calibrated GBM paths",
        )?;
    }
    run.finish()
}

fn driver(cfg: &RunConfig) -> Result<(ExternalField, Vec<NaiveDate>)> {
    match &cfg.field {
        Some(path) => read_field(path, cfg.smoothing_window),
        None => {
            let calendar = synthetic_calendar(cfg);
            Ok((synthetic_driver(cfg, &calendar)?, calendar))
        }
    }
}

fn uniform_params(cfg: &RunConfig) -> Vec<GbmParams> {
    (0..cfg.members)
        .map(|i| GbmParams {
            mu: cfg.mu,
            sigma: cfg.sigma,
            x0: cfg.x0,
            seed: cfg.seed,
            stream_id: i as u64,
        })
        .collect()
}

pub fn run_simulate(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("simulate", cfg)?;
    let (field, calendar) = driver(cfg)?;
    let ids = simulated_ids(cfg.members);
    let params = uniform_params(cfg);
    let betas = betas(cfg, cfg.members);
    let prices = simulate_driven(&ids, &params, &betas, &field, &calendar)?;
    run.out.csv(
        "prices.csv",
        &ensemble_csv(&prices),
        json!({ "content": "simulated prices" }),
    )?;
    write_series(
        &mut run,
        "field.csv",
        &field.increments,
        "external field increments",
    )?;
    run.out.csv(
        "params.csv",
        &params_csv(&ids, &params, &betas),
        json!({ "content": "per-path parameters" }),
    )?;
    run.note("members", ids.len());
    run.note("steps", calendar.len() - 1);
    run.finish()
}

pub fn run_build_field(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("build-field", cfg)?;
    let (prices, report) = load_prices(cfg)?;
    run.diagnostics.extend(ingest_diagnostics(&report));
    let field = build_external_field(&prices.log_returns()?, cfg.smoothing_window)?;
    write_series(
        &mut run,
        "field.csv",
        &field.increments,
        "external field increments",
    )?;
    run.note("field_sd", sample_sd(field.values()));
    if let Some(ratios) = epoch_std_ratios(&field, &cfg.epochs.0) {
        run.note("epoch_std_ratios", ratios);
    }
    run.finish()
}

/// Everything `replicate` simulates.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// The observed ensemble when the field came from data.
    pub real: Option<Ensemble>,
    pub field: ExternalField,
    pub params: Vec<GbmParams>,
    pub betas: Vec<f64>,
    pub driven: Ensemble,
    /// Same parameters and Wiener increments, no coupling.
    pub control: Ensemble,
}

/// Simulates driven and control ensembles, from the real data in
/// `cfg.inputs` when given and from the synthetic field otherwise.
pub fn replicate(cfg: &RunConfig) -> Result<(Replication, Vec<Diagnostic>)> {
    cfg.validate()?;
    let (real, field, calendar, params, ids, diagnostics) = if cfg.inputs.is_empty() {
        let calendar = synthetic_calendar(cfg);
        let field = synthetic_driver(cfg, &calendar)?;
        let ids = simulated_ids(cfg.members);
        (None, field, calendar, uniform_params(cfg), ids, Vec::new())
    } else {
        let (prices, report) = load_prices(cfg)?;
        let field = build_external_field(&prices.log_returns()?, cfg.smoothing_window)?;
        let params = calibrate_members(&prices, cfg.seed)?;
        let calendar = prices.calendar().to_vec();
        let ids = prices.ids();
        (
            Some(prices),
            field,
            calendar,
            params,
            ids,
            ingest_diagnostics(&report),
        )
    };
    let betas = betas(cfg, ids.len());
    let driven = simulate_driven(&ids, &params, &betas, &field, &calendar)?;
    let control = simulate_plain(&ids, &params, &calendar)?;
    Ok((
        Replication {
            real,
            field,
            params,
            betas,
            driven,
            control,
        },
        diagnostics,
    ))
}

/// Values of `series` on `dates`, NaN where a window is missing.
fn on_dates(series: &Series, dates: &[NaiveDate]) -> Vec<f64> {
    dates
        .iter()
        .map(|d| {
            series
                .dates()
                .binary_search(d)
                .map_or(f64::NAN, |i| series.values()[i])
        })
        .collect()
}

pub fn run_replicate(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut run = Run::start("replicate", cfg)?;
    let (rep, diags) = replicate(cfg)?;
    run.diagnostics.extend(diags);

    let mut labelled: Vec<(&str, Analysis)> = Vec::new();
    if let Some(real) = &rep.real {
        labelled.push((
            "real",
            analyze(real, cfg).map_err(|e| e.context("real data"))?,
        ));
    }
    labelled.push((
        "driven",
        analyze(&rep.driven, cfg).map_err(|e| e.context("driven ensemble"))?,
    ));
    labelled.push((
        "control",
        analyze(&rep.control, cfg).map_err(|e| e.context("control ensemble"))?,
    ));
    for (label, a) in &labelled {
        run.diagnostics
            .extend(relabel(a.causality.diagnostics.clone(), label));
        run.diagnostics
            .extend(relabel(a.rqa.diagnostics.clone(), label));
    }

    let dates: Vec<NaiveDate> = labelled[0].1.windows.iter().map(|w| w.label_date).collect();
    let gc: Vec<(&str, Series)> = labelled
        .iter()
        .map(|(l, a)| (*l, a.causality.mean_series()))
        .collect();
    let det: Vec<(&str, Series)> = labelled
        .iter()
        .map(|(l, a)| (*l, a.rqa.mean_det.clone()))
        .collect();
    let lam: Vec<(&str, Series)> = labelled
        .iter()
        .map(|(l, a)| (*l, a.rqa.mean_lam.clone()))
        .collect();
    for (rel, what, table) in [
        (
            "replicate_causality.csv",
            "mean pairwise causality per window",
            &gc,
        ),
        ("replicate_det.csv", "mean DET (%) per window", &det),
        ("replicate_lam.csv", "mean LAM (%) per window", &lam),
    ] {
        let columns: Vec<(&str, Vec<f64>)> = table
            .iter()
            .map(|(l, s)| (*l, on_dates(s, &dates)))
            .collect();
        let refs: Vec<(&str, &[f64])> = columns.iter().map(|(l, v)| (*l, v.as_slice())).collect();
        run.out
            .csv(rel, &columns_csv(&dates, &refs), json!({ "content": what }))?;
    }

    write_series(
        &mut run,
        "field.csv",
        &rep.field.increments,
        "external field increments",
    )?;
    let recovered = build_external_field(&rep.driven.log_returns()?, cfg.smoothing_window)?;
    write_series(
        &mut run,
        "field_recovered.csv",
        &recovered.increments,
        "field estimated from the driven ensemble",
    )?;
    let ids = rep.driven.ids();
    run.out.csv(
        "params.csv",
        &params_csv(&ids, &rep.params, &rep.betas),
        json!({ "content": "per-path parameters" }),
    )?;
    run.out.csv(
        "driven_prices.csv",
        &ensemble_csv(&rep.driven),
        json!({ "content": "driven GBM prices" }),
    )?;
    run.out.csv(
        "control_prices.csv",
        &ensemble_csv(&rep.control),
        json!({ "content": "uncoupled GBM prices" }),
    )?;

    run.note("members", ids.len());
    run.note("windows", dates.len());
    let reference = centered_moving_average(rep.field.values(), cfg.smoothing_window)?;
    for (key, target) in [
        ("field_recovery_correlation", reference.as_slice()),
        ("field_recovery_correlation_unsmoothed", rep.field.values()),
    ] {
        match pearson_corr(target, recovered.values()) {
            Ok(r) => run.note(key, r),
            Err(e) => run
                .diagnostics
                .push(Diagnostic::new("replicate", "field", e.to_string())),
        }
    }
    if let Some(ratios) = epoch_std_ratios(&rep.field, &cfg.epochs.0) {
        run.note("epoch_std_ratios", ratios);
    }
    if !cfg.epochs.0.is_empty() {
        let windows = &labelled[0].1.windows;
        let mut contrasts = Map::new();
        for (quantity, table) in [("causality", &gc), ("det", &det), ("lam", &lam)] {
            for (label, series) in table.iter() {
                if let Some(c) = epoch_contrast(series, windows, &cfg.epochs.0) {
                    contrasts.insert(format!("{label}_{quantity}"), serde_json::to_value(c)?);
                }
            }
        }
        run.note("epoch_contrasts", contrasts);
    }
    if rep.real.is_some() {
        let real = &gc[0].1;
        if let Some((m, sd)) = moments(&gc[gc.len() - 1].1) {
            match exceedance_fraction(real, m, sd) {
                Ok(f) => run.note("exceedance_fraction", f),
                Err(e) => {
                    run.diagnostics
                        .push(Diagnostic::new("replicate", "exceedance", e.to_string()))
                }
            }
        }
    }
    run.finish()
}
