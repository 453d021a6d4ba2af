use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsf_core::evaluation::{
    compare, read_reports, render_comparison_csv, render_comparison_markdown, ReportFormat,
};
use tsf_core::gateway::BackendKind;
use tsf_core::pipeline::{self, RunOutcome};
use tsf_core::{Error, RunConfig, Strategy};

#[derive(Parser)]
#[command(name = "tsf", version, about = "Prompt-based LLM time-series forecasting benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run strategies over a dataset and write reports.
    Run(RunArgs),
    /// Compare two report files and print improvement percentages.
    Compare(CompareArgs),
    /// Run against the HTTP backend and record every response.
    Record(RunArgs),
    /// Rerun a configuration offline from recorded responses.
    Replay(RunArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// TOML column mapping for the dataset.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated series ids to forecast.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Context length L in values (default 96).
    #[arg(long)]
    context_len: Option<usize>,
    /// Forecast horizon; repeat for several (default 1,2,3,4,5,6,12).
    #[arg(long = "horizon")]
    horizons: Vec<usize>,
    /// Step between evaluation windows (default 96).
    #[arg(long)]
    stride: Option<usize>,
    /// Prompting strategy; repeat for several (default all).
    #[arg(long = "strategy")]
    strategies: Vec<Strategy>,
    /// Patch length w (default 3).
    #[arg(long)]
    patch_window: Option<usize>,
    /// Patch stride s (default 1).
    #[arg(long)]
    patch_stride: Option<usize>,
    /// Number of retrieved neighbors (default 5).
    #[arg(long)]
    k: Option<usize>,
    /// http, mock-persistence, mock-linear or replay.
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the HTTP backend.
    #[arg(long)]
    model: Option<String>,
    /// Sampling temperature (default 0).
    #[arg(long)]
    temperature: Option<f64>,
    /// Maximum concurrent requests (default 1).
    #[arg(long)]
    parallel: Option<usize>,
    /// Per-request timeout in seconds (default 60).
    #[arg(long)]
    timeout_seconds: Option<u64>,
    /// Retries after a timeout, transport error or HTTP 429 (default 3).
    #[arg(long)]
    max_retries: Option<u32>,
    /// Evaluation windows per feature and horizon, subsampled by seed (default 100).
    #[arg(long)]
    max_windows: Option<usize>,
    /// Seed for window subsampling (default 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Repair predictions of the wrong length by truncating or padding with the last value.
    #[arg(long)]
    lenient: bool,
    /// Rank neighbors by distance between z-normalized windows.
    #[arg(long)]
    znorm_neighbors: bool,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Report path; a manifest is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; inferred from the output extension when omitted.
    #[arg(long)]
    format: Option<ReportFormat>,
    /// Fixture file written by record and read by replay.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline report (JSON).
    baseline: PathBuf,
    /// Report to compare against the baseline (JSON).
    ours: PathBuf,
    /// markdown or csv.
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Write the comparison here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if self.dataset.is_some() {
            cfg.dataset = self.dataset;
        }
        if self.schema.is_some() {
            cfg.schema = self.schema;
        }
        if !self.features.is_empty() {
            cfg.features = self.features;
        }
        set(&mut cfg.context_len, self.context_len);
        if !self.horizons.is_empty() {
            cfg.horizons = self.horizons;
        }
        set(&mut cfg.stride, self.stride);
        if !self.strategies.is_empty() {
            cfg.strategies = self.strategies;
        }
        set(&mut cfg.patch_window, self.patch_window);
        set(&mut cfg.patch_stride, self.patch_stride);
        set(&mut cfg.k, self.k);
        set(&mut cfg.max_windows, self.max_windows);
        set(&mut cfg.seed, self.seed);
        cfg.lenient |= self.lenient;
        cfg.znorm_neighbors |= self.znorm_neighbors;
        if self.templates.is_some() {
            cfg.templates = self.templates;
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.format.is_some() {
            cfg.format = self.format;
        }
        let b = &mut cfg.backend;
        set(&mut b.kind, self.backend);
        if self.endpoint.is_some() {
            b.endpoint_url = self.endpoint;
        }
        if self.model.is_some() {
            b.model_name = self.model;
        }
        set(&mut b.temperature, self.temperature);
        set(&mut b.parallelism, self.parallel);
        set(&mut b.timeout_seconds, self.timeout_seconds);
        set(&mut b.max_retries, self.max_retries);
        if self.fixtures.is_some() {
            b.fixture_path = self.fixtures;
        }
        Ok(cfg)
    }
}

fn report_outcome(outcome: &RunOutcome) -> ExitCode {
    for r in &outcome.reports {
        eprintln!(
            "{} {} h={}: mse={} mae={} parsed {}/{}",
            r.label(),
            r.strategy,
            r.horizon,
            r.mean_mse,
            r.mean_mae,
            r.n_parsed,
            r.n_windows
        );
    }
    if outcome.succeeded() {
        return ExitCode::SUCCESS;
    }
    eprintln!("{} window(s) failed:", outcome.failures.len());
    for f in &outcome.failures {
        eprintln!("  {}", f.message);
    }
    ExitCode::from(1)
}

fn run_command(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            Ok(report_outcome(&pipeline::execute(&cfg)?))
        }
        Command::Replay(args) => {
            let mut cfg = args.into_config()?;
            if cfg.backend.fixture_path.is_none() {
                return Err(Error::Config("replay needs --fixtures".into()));
            }
            cfg.backend.kind = BackendKind::Replay;
            Ok(report_outcome(&pipeline::execute(&cfg)?))
        }
        Command::Record(args) => {
            let cfg = args.into_config()?;
            let fixtures = cfg
                .backend
                .fixture_path
                .clone()
                .ok_or_else(|| Error::Config("record needs --fixtures".into()))?;
            Ok(report_outcome(&pipeline::record(&cfg, &fixtures)?))
        }
        Command::Compare(args) => {
            let rows = compare(&read_reports(&args.baseline)?, &read_reports(&args.ours)?)?;
            let text = match args.format {
                ReportFormat::Csv => render_comparison_csv(&rows),
                ReportFormat::Markdown => render_comparison_markdown(&rows),
                ReportFormat::Json => serde_json::to_string_pretty(&rows).map_err(|e| Error::Config(e.to_string()))? + "\n",
            };
            match args.out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
