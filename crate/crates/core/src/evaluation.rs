//! Per-window scoring, run aggregation and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::TokenSource;
use crate::prompting::Strategy;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: prediction has {pred} values, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("cannot score empty sequences")]
    Empty,
    #[error("no window of {0} parsed successfully")]
    NoParsedWindows(String),
    #[error("runs differ in dataset or horizon: {0} vs {1}")]
    MismatchedRuns(String, String),
    #[error("baseline mse is zero for {0}")]
    ZeroBaseline(String),
    #[error("the two report sets share no (dataset, horizon) key")]
    NoOverlap,
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_id: String,
    pub forecast: Vec<f64>,
    pub truth: Vec<f64>,
    pub mse: f64,
    pub mae: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_seconds: f64,
    pub token_source: TokenSource,
    pub parse_status: ParseStatus,
    /// Share of echoed patches matching the true patches, when the strategy
    /// asks the model to echo them and it did.
    pub patch_fidelity: Option<f64>,
}

impl WindowResult {
    /// Scores a parsed forecast against the truth.
    #[allow(clippy::too_many_arguments)]
    pub fn scored(
        window_id: impl Into<String>,
        forecast: Vec<f64>,
        truth: Vec<f64>,
        input_tokens: u64,
        output_tokens: u64,
        latency_seconds: f64,
        token_source: TokenSource,
        patch_fidelity: Option<f64>,
    ) -> Result<Self, EvalError> {
        let mse = mse(&forecast, &truth)?;
        let mae = mae(&forecast, &truth)?;
        Ok(WindowResult {
            window_id: window_id.into(),
            forecast,
            truth,
            mse,
            mae,
            input_tokens,
            output_tokens,
            latency_seconds,
            token_source,
            parse_status: ParseStatus::Ok,
            patch_fidelity,
        })
    }

    /// A window whose response could not be parsed. It still carries the
    /// tokens and latency that were spent on it.
    pub fn failed(
        window_id: impl Into<String>,
        truth: Vec<f64>,
        input_tokens: u64,
        output_tokens: u64,
        latency_seconds: f64,
        token_source: TokenSource,
        reason: impl Into<String>,
    ) -> Self {
        WindowResult {
            window_id: window_id.into(),
            forecast: Vec::new(),
            truth,
            mse: f64::NAN,
            mae: f64::NAN,
            input_tokens,
            output_tokens,
            latency_seconds,
            token_source,
            parse_status: ParseStatus::Failed(reason.into()),
            patch_fidelity: None,
        }
    }

    pub fn parsed(&self) -> bool {
        self.parse_status == ParseStatus::Ok
    }
}

/// Everything a report carries besides the aggregated numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub dataset: String,
    pub features: Vec<String>,
    pub strategy: String,
    pub horizon: usize,
    pub template_version: String,
    pub backend_id: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub features: Vec<String>,
    pub strategy: String,
    pub horizon: usize,
    pub n_windows: usize,
    pub n_parsed: usize,
    pub parse_failure_rate: f64,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_latency_s: f64,
    pub token_source: TokenSource,
    pub mean_patch_fidelity: Option<f64>,
    pub template_version: String,
    pub backend_id: String,
    pub config: serde_json::Value,
}

impl RunReport {
    /// Row label: the dataset name, suffixed with the features when the run
    /// covered a subset of columns.
    pub fn label(&self) -> String {
        if self.features.is_empty() {
            self.dataset.clone()
        } else {
            format!("{} [{}]", self.dataset, self.features.join(", "))
        }
    }

    fn key(&self) -> String {
        format!("{} h={}", self.label(), self.horizon)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates window results into a report. Metric means cover parsed
/// windows only; token totals and latency cover every window. Results are
/// sorted before summation so the report does not depend on input order.
pub fn aggregate(results: &[WindowResult], meta: RunMeta) -> Result<RunReport, EvalError> {
    let mut sorted: Vec<&WindowResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.window_id
            .cmp(&b.window_id)
            .then_with(|| a.mse.total_cmp(&b.mse))
            .then_with(|| a.mae.total_cmp(&b.mae))
            .then_with(|| a.input_tokens.cmp(&b.input_tokens))
            .then_with(|| a.output_tokens.cmp(&b.output_tokens))
            .then_with(|| a.latency_seconds.total_cmp(&b.latency_seconds))
    });
    let parsed: Vec<&WindowResult> = sorted.iter().copied().filter(|r| r.parsed()).collect();
    if parsed.is_empty() {
        return Err(EvalError::NoParsedWindows(format!("{} {} h={}", meta.dataset, meta.strategy, meta.horizon)));
    }
    let n_windows = sorted.len();
    let n_parsed = parsed.len();
    let total_input_tokens = sorted.iter().map(|r| r.input_tokens).sum::<u64>();
    let total_output_tokens = sorted.iter().map(|r| r.output_tokens).sum::<u64>();
    let token_source = if sorted.iter().all(|r| r.token_source == TokenSource::Reported) {
        TokenSource::Reported
    } else {
        TokenSource::Estimated
    };
    Ok(RunReport {
        dataset: meta.dataset,
        features: meta.features,
        strategy: meta.strategy,
        horizon: meta.horizon,
        n_windows,
        n_parsed,
        parse_failure_rate: (n_windows - n_parsed) as f64 / n_windows as f64,
        mean_mse: mean(parsed.iter().map(|r| r.mse)).expect("non-empty"),
        mean_mae: mean(parsed.iter().map(|r| r.mae)).expect("non-empty"),
        total_input_tokens,
        total_output_tokens,
        mean_input_tokens: total_input_tokens as f64 / n_windows as f64,
        mean_output_tokens: total_output_tokens as f64 / n_windows as f64,
        mean_latency_s: mean(sorted.iter().map(|r| r.latency_seconds)).expect("non-empty"),
        token_source,
        mean_patch_fidelity: mean(parsed.iter().filter_map(|r| r.patch_fidelity)),
        template_version: meta.template_version,
        backend_id: meta.backend_id,
        config: meta.config,
    })
}

/// Percentage reduction in mean MSE of `ours` relative to `baseline`.
pub fn improvement(baseline: &RunReport, ours: &RunReport) -> Result<f64, EvalError> {
    if baseline.dataset != ours.dataset || baseline.features != ours.features || baseline.horizon != ours.horizon {
        return Err(EvalError::MismatchedRuns(baseline.key(), ours.key()));
    }
    improvement_pct(baseline.mean_mse, ours.mean_mse).ok_or_else(|| EvalError::ZeroBaseline(baseline.key()))
}

/// `100 * (baseline - ours) / baseline`, or `None` for a zero baseline.
pub fn improvement_pct(baseline: f64, ours: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (baseline - ours) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    /// Format implied by a file extension; JSON when unknown.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("md") | Some("markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" | "markdown-table" => Ok(ReportFormat::Markdown),
            other => Err(EvalError::UnknownFormat(other.into())),
        }
    }
}

pub const CSV_HEADER: &str = "dataset,strategy,horizon,n_windows,n_parsed,mean_mse,mean_mae,mean_it,mean_ot,mean_latency_s";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_json(reports: &[RunReport]) -> Result<String, EvalError> {
    let mut text = serde_json::to_string_pretty(reports).map_err(|e| EvalError::Serialize(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn render_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.label()),
            csv_field(&r.strategy),
            r.horizon,
            r.n_windows,
            r.n_parsed,
            r.mean_mse,
            r.mean_mae,
            r.mean_input_tokens,
            r.mean_output_tokens,
            r.mean_latency_s
        );
    }
    out
}

fn strategy_rank(name: &str) -> (usize, String) {
    let idx = Strategy::from_str(name)
        .ok()
        .and_then(|s| Strategy::ALL.iter().position(|&x| x == s))
        .unwrap_or(usize::MAX);
    (idx, name.to_string())
}

fn fmt_metric(x: f64) -> String {
    format!("{x:.4}")
}

fn bold_if(text: String, best: bool) -> String {
    if best {
        format!("**{text}**")
    } else {
        text
    }
}

/// A Dataset × Horizon grid with one MSE and one MAE column per strategy.
/// The lowest MSE and MAE in each row are bolded.
pub fn render_markdown(reports: &[RunReport]) -> String {
    let mut strategies: Vec<String> =
        reports.iter().map(|r| r.strategy.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    strategies.sort_by_key(|s| strategy_rank(s));

    let mut rows: BTreeMap<(String, usize), BTreeMap<&str, &RunReport>> = BTreeMap::new();
    for r in reports {
        rows.entry((r.label(), r.horizon)).or_default().insert(r.strategy.as_str(), r);
    }

    let mut out = String::from("| Dataset | Horizon |");
    for s in &strategies {
        let _ = write!(out, " {s} MSE | {s} MAE |");
    }
    out.push_str("\n|---|---|");
    for _ in &strategies {
        out.push_str("---|---|");
    }
    out.push('\n');

    for ((label, horizon), cells) in &rows {
        let best_mse = cells.values().map(|r| r.mean_mse).fold(f64::INFINITY, f64::min);
        let best_mae = cells.values().map(|r| r.mean_mae).fold(f64::INFINITY, f64::min);
        let _ = write!(out, "| {label} | {horizon} |");
        for s in &strategies {
            match cells.get(s.as_str()) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " {} | {} |",
                        bold_if(fmt_metric(r.mean_mse), cells.len() > 1 && r.mean_mse == best_mse),
                        bold_if(fmt_metric(r.mean_mae), cells.len() > 1 && r.mean_mae == best_mae)
                    );
                }
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_report(reports: &[RunReport], format: ReportFormat) -> Result<String, EvalError> {
    match format {
        ReportFormat::Json => render_json(reports),
        ReportFormat::Csv => Ok(render_csv(reports)),
        ReportFormat::Markdown => Ok(render_markdown(reports)),
    }
}

/// Writes the reports to `path` in the given format.
pub fn emit_report(reports: &[RunReport], format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    let text = render_report(reports, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| EvalError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    }
    std::fs::write(path, text).map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Reads a JSON report file written by [`emit_report`].
pub fn read_reports(path: &Path) -> Result<Vec<RunReport>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Serialize(format!("{}: {e}", path.display())))
}

/// One compared (dataset, horizon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub horizon: usize,
    pub baseline_strategy: String,
    pub ours_strategy: String,
    pub baseline_mse: f64,
    pub ours_mse: f64,
    pub baseline_mae: f64,
    pub ours_mae: f64,
    /// Percentage MSE reduction; `None` when the baseline MSE is zero.
    pub improvement_pct: Option<f64>,
}

/// Pairs reports from two runs on (dataset, horizon). Within a key,
/// same-strategy reports are paired when both sides have them; otherwise
/// every baseline report is paired with every report of ours.
pub fn compare(baseline: &[RunReport], ours: &[RunReport]) -> Result<Vec<Comparison>, EvalError> {
    let group = |reports: &[RunReport]| {
        let mut map: BTreeMap<(String, usize), Vec<RunReport>> = BTreeMap::new();
        for r in reports {
            map.entry((r.label(), r.horizon)).or_default().push(r.clone());
        }
        for v in map.values_mut() {
            v.sort_by_key(|r| strategy_rank(&r.strategy));
        }
        map
    };
    let a = group(baseline);
    let b = group(ours);
    let mut out = Vec::new();
    for (key, base) in &a {
        let Some(mine) = b.get(key) else { continue };
        let same: Vec<(&RunReport, &RunReport)> = base
            .iter()
            .filter_map(|x| mine.iter().find(|y| y.strategy == x.strategy).map(|y| (x, y)))
            .collect();
        let pairs = if same.is_empty() {
            base.iter().flat_map(|x| mine.iter().map(move |y| (x, y))).collect()
        } else {
            same
        };
        for (x, y) in pairs {
            out.push(Comparison {
                dataset: key.0.clone(),
                horizon: key.1,
                baseline_strategy: x.strategy.clone(),
                ours_strategy: y.strategy.clone(),
                baseline_mse: x.mean_mse,
                ours_mse: y.mean_mse,
                baseline_mae: x.mean_mae,
                ours_mae: y.mean_mae,
                improvement_pct: improvement_pct(x.mean_mse, y.mean_mse),
            });
        }
    }
    if out.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(out)
}

fn fmt_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}%"))
}

pub fn render_comparison_markdown(rows: &[Comparison]) -> String {
    let mut out = String::from(
        "| Dataset | Horizon | Baseline | Ours | Baseline MSE | Ours MSE | Baseline MAE | Ours MAE | Improvement |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for c in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            c.dataset,
            c.horizon,
            c.baseline_strategy,
            c.ours_strategy,
            bold_if(fmt_metric(c.baseline_mse), c.baseline_mse < c.ours_mse),
            bold_if(fmt_metric(c.ours_mse), c.ours_mse < c.baseline_mse),
            bold_if(fmt_metric(c.baseline_mae), c.baseline_mae < c.ours_mae),
            bold_if(fmt_metric(c.ours_mae), c.ours_mae < c.baseline_mae),
            fmt_pct(c.improvement_pct)
        );
    }
    out
}

pub fn render_comparison_csv(rows: &[Comparison]) -> String {
    let mut out = String::from(
        "dataset,horizon,baseline_strategy,ours_strategy,baseline_mse,ours_mse,baseline_mae,ours_mae,improvement_pct\n",
    );
    for c in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&c.dataset),
            c.horizon,
            csv_field(&c.baseline_strategy),
            csv_field(&c.ours_strategy),
            c.baseline_mse,
            c.ours_mse,
            c.baseline_mae,
            c.ours_mae,
            c.improvement_pct.map_or_else(String::new, |p| p.to_string())
        );
    }
    out
}
