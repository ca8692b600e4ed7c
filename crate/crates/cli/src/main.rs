use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codriver::diagnostics::Diagnostic;
use codriver::pipeline::{self, ResultBundle, RunConfig};

/// Windowed Granger causality and recurrence analysis of price ensembles.
#[derive(Debug, Parser)]
#[command(name = "codriver", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read and align price CSVs.
    Ingest(Options),
    /// Windowed pairwise Granger causality.
    Granger(Options),
    /// Windowed recurrence quantification (DET, LAM).
    Rqa(Options),
    /// Simulate (driven) GBM paths.
    Simulate(Options),
    /// Estimate the common driver from prices.
    BuildField(Options),
    /// Driven-GBM replication next to its uncoupled control.
    Replicate(Options),
}

#[derive(Debug, Args)]
struct Options {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    tau_prime: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Target recurrence rate in percent.
    #[arg(long)]
    target_rr: Option<f64>,
    #[arg(long)]
    l_min: Option<usize>,
    #[arg(long)]
    v_min: Option<usize>,
    #[arg(long)]
    smoothing_window: Option<usize>,
    #[arg(long)]
    adf_lag: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compare with a GBM ensemble calibrated to the data.
    #[arg(long)]
    baseline: Option<bool>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    /// `random` or a fixed coupling in [0, 1].
    #[arg(long)]
    beta: Option<String>,
    /// Baseline standard deviation of the synthetic field.
    #[arg(long)]
    field_std: Option<f64>,
    /// `start:end:factor,...` in field steps, or `none`.
    #[arg(long)]
    epochs: Option<String>,
    /// A `date,value` field file to drive the simulation.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    start_date: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as KEY=VALUE. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Price CSV files or directories of them.
    inputs: Vec<PathBuf>,
}

impl Options {
    fn overrides(&self) -> Vec<(String, String)> {
        fn opt<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key.to_string(), v.to_string()));
            }
        }
        let mut out = Vec::new();
        for kv in &self.set {
            match kv.split_once('=') {
                Some((k, v)) => out.push((k.to_string(), v.to_string())),
                None => out.push((kv.clone(), String::new())),
            }
        }
        opt(&mut out, "window", &self.window);
        opt(&mut out, "step", &self.step);
        opt(&mut out, "tau", &self.tau);
        opt(&mut out, "tau_prime", &self.tau_prime);
        opt(&mut out, "alpha", &self.alpha);
        opt(&mut out, "target_rr", &self.target_rr);
        opt(&mut out, "l_min", &self.l_min);
        opt(&mut out, "v_min", &self.v_min);
        opt(&mut out, "smoothing_window", &self.smoothing_window);
        opt(&mut out, "adf_lag", &self.adf_lag);
        opt(&mut out, "seed", &self.seed);
        opt(&mut out, "baseline", &self.baseline);
        opt(&mut out, "members", &self.members);
        opt(&mut out, "steps", &self.steps);
        opt(&mut out, "mu", &self.mu);
        opt(&mut out, "sigma", &self.sigma);
        opt(&mut out, "x0", &self.x0);
        opt(&mut out, "beta", &self.beta);
        opt(&mut out, "field_std", &self.field_std);
        opt(&mut out, "epochs", &self.epochs);
        opt(&mut out, "field", &self.field.as_ref().map(|p| p.display()));
        opt(&mut out, "start_date", &self.start_date);
        opt(&mut out, "out", &self.out.as_ref().map(|p| p.display()));
        if !self.inputs.is_empty() {
            let joined: Vec<String> = self
                .inputs
                .iter()
                .map(|p| p.display().to_string())
                .collect();
            out.push(("inputs".into(), joined.join(",")));
        }
        out
    }

    /// File first, then flags, so flags win.
    fn config(&self) -> codriver::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            cfg.set(&key, &value)
                .map_err(|e| e.context(format!("--{}", key.replace('_', "-"))))?;
        }
        Ok(cfg)
    }
}

type Runner = fn(&RunConfig) -> codriver::Result<ResultBundle>;

fn record_failure(cfg: &RunConfig, command: &str, err: &codriver::Error) {
    let diagnostic = Diagnostic::new("fatal", command, err.to_string());
    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(&cfg.out)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(cfg.out.join("diagnostics.jsonl"))?;
        let line = serde_json::to_string(&diagnostic).map_err(std::io::Error::other)?;
        writeln!(file, "{line}")
    };
    if let Err(e) = write() {
        log::error!("could not write diagnostics: {e}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, options, run): (&str, &Options, Runner) = match &cli.command {
        Command::Ingest(o) => ("ingest", o, pipeline::run_ingest),
        Command::Granger(o) => ("granger", o, pipeline::run_granger),
        Command::Rqa(o) => ("rqa", o, pipeline::run_rqa),
        Command::Simulate(o) => ("simulate", o, pipeline::run_simulate),
        Command::BuildField(o) => ("build-field", o, pipeline::run_build_field),
        Command::Replicate(o) => ("replicate", o, pipeline::run_replicate),
    };
    let cfg = match options.config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(bundle) => {
            println!(
                "{name}: wrote {} files to {} ({} diagnostics)",
                bundle.files.len(),
                bundle.out_dir.display(),
                bundle.diagnostics.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) if e.is_input_error() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            record_failure(&cfg, name, &e);
            ExitCode::from(2)
        }
    }
}
