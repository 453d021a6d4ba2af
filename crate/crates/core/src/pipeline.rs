//! End-to-end runs: slice, retrieve, assemble, dispatch, parse, score and
//! aggregate, for every (strategy, horizon) pair of a configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataset::{load_csv, slice_windows, CsvSchema, Dataset, EvalWindow};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, emit_report, ReportFormat, RunMeta, RunReport, WindowResult};
use crate::gateway::{Gateway, LlmResponse, RecordingBackend};
use crate::neighbors::{build_pool, top_k};
use crate::parsing::{parse_forecast, patch_fidelity, DEFAULT_FIDELITY_TOL};
use crate::prompting::{assemble, PromptBundle, SeriesInfo, Strategy, TemplateSet};

/// Loads the configured dataset and keeps the selected features.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("no dataset given".into()))?;
    let schema = match &cfg.schema {
        Some(p) => CsvSchema::from_toml_file(p)?,
        None => CsvSchema::default(),
    };
    let dataset = load_csv(path, &schema)?;
    select_features(dataset, &cfg.features)
}

/// Restricts a dataset to the named series, in the order given. An empty
/// selection keeps every series.
pub fn select_features(mut dataset: Dataset, features: &[String]) -> Result<Dataset> {
    if features.is_empty() {
        return Ok(dataset);
    }
    let mut picked = Vec::with_capacity(features.len());
    for f in features {
        let pos = dataset
            .series
            .iter()
            .position(|s| &s.id == f)
            .ok_or_else(|| Error::Config(format!("feature `{f}` not found in dataset `{}`", dataset.name)))?;
        picked.push(dataset.series[pos].clone());
    }
    dataset.series = picked;
    dataset.feature_count = dataset.series.len();
    Ok(dataset)
}

pub fn load_templates(cfg: &RunConfig) -> Result<TemplateSet> {
    Ok(match &cfg.templates {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    })
}

fn stream_id(feature: &str, horizon: usize) -> u64 {
    let digest = Sha256::new().chain_update(feature.as_bytes()).chain_update(horizon.to_le_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Evaluation windows for one feature and horizon: contexts starting at the
/// warmup offset every `stride` steps, subsampled to at most `max_windows`
/// with a generator seeded by (seed, feature, horizon).
pub fn eval_windows(dataset: &Dataset, feature: &str, horizon: usize, cfg: &RunConfig) -> Result<Vec<EvalWindow>> {
    let series = dataset
        .series_by_id(feature)
        .ok_or_else(|| Error::Config(format!("feature `{feature}` not found")))?;
    let warmup = cfg.warmup();
    let windows: Vec<EvalWindow> = slice_windows(series, cfg.context_len, horizon, 1)?
        .into_iter()
        .filter(|w| w.context_start >= warmup && (w.context_start - warmup).is_multiple_of(cfg.stride))
        .collect();
    if windows.len() <= cfg.max_windows {
        return Ok(windows);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream_id(feature, horizon));
    let mut picks = sample(&mut rng, windows.len(), cfg.max_windows).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| windows[i].clone()).collect())
}

/// A window that could not be evaluated at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFailure {
    pub strategy: String,
    pub horizon: usize,
    pub window: String,
    pub message: String,
}

impl WindowFailure {
    fn from_error(strategy: Strategy, horizon: usize, window: &str, err: Error) -> Self {
        let wrapped = Error::Window {
            strategy: strategy.name().into(),
            horizon,
            window: window.into(),
            source: Box::new(err),
        };
        WindowFailure {
            strategy: strategy.name().into(),
            horizon,
            window: window.into(),
            message: wrapped.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub reports: Vec<RunReport>,
    pub windows: BTreeMap<String, Vec<WindowResult>>,
    pub failures: Vec<WindowFailure>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Prepared {
    window: EvalWindow,
    bundle: PromptBundle,
}

/// Builds the prompt bundles of one (strategy, horizon) cell.
fn prepare(
    dataset: &Dataset,
    strategy: Strategy,
    horizon: usize,
    cfg: &RunConfig,
    templates: &TemplateSet,
    failures: &mut Vec<WindowFailure>,
) -> Result<Vec<Prepared>> {
    let opts = cfg.prompt_options();
    let pool_opts = cfg.pool_options();
    let mut out = Vec::new();
    for series in &dataset.series {
        let info = SeriesInfo::from_series(series, dataset.utc_offset_seconds);
        for window in eval_windows(dataset, &series.id, horizon, cfg)? {
            let built = (|| -> Result<PromptBundle> {
                let neighbors = if strategy.needs_neighbors() {
                    let pool = build_pool(dataset, &window, &pool_opts)?;
                    Some(top_k(&window, &pool, cfg.k, cfg.znorm_neighbors)?)
                } else {
                    None
                };
                Ok(assemble(strategy, &window, &info, &opts, templates, neighbors.as_ref())?)
            })();
            match built {
                Ok(bundle) => out.push(Prepared { window, bundle }),
                Err(e) => failures.push(WindowFailure::from_error(strategy, horizon, &window.id(), e)),
            }
        }
    }
    Ok(out)
}

fn score(strategy: Strategy, window: &EvalWindow, resp: &LlmResponse, cfg: &RunConfig) -> WindowResult {
    match parse_forecast(&resp.text, window.horizon, cfg.lenient) {
        Ok(forecast) => {
            let fidelity = forecast.echoed_patches.as_ref().and_then(|echoed| {
                strategy
                    .expected_patches(&window.context, cfg.patch_window, cfg.patch_stride, window.horizon)
                    .map(|truth| patch_fidelity(echoed, &truth, DEFAULT_FIDELITY_TOL).exact_fraction)
            });
            WindowResult::scored(
                window.id(),
                forecast.values,
                window.truth.clone(),
                resp.input_tokens,
                resp.output_tokens,
                resp.latency_seconds,
                resp.token_source,
                fidelity,
            )
            .expect("parsed forecast has horizon length")
        }
        Err(e) => WindowResult::failed(
            window.id(),
            window.truth.clone(),
            resp.input_tokens,
            resp.output_tokens,
            resp.latency_seconds,
            resp.token_source,
            e.to_string(),
        ),
    }
}

/// Key of one (strategy, horizon) cell in [`RunOutcome::windows`].
pub fn cell_key(strategy: Strategy, horizon: usize) -> String {
    format!("{}/h{}", strategy.name(), horizon)
}

/// Runs every configured (strategy, horizon) cell through the gateway.
/// Windows that fail before a response is parsed are collected as failures;
/// unparseable responses count against the parse-failure rate instead.
pub fn run(cfg: &RunConfig, dataset: &Dataset, templates: &TemplateSet, gateway: &Gateway) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut outcome = RunOutcome { reports: Vec::new(), windows: BTreeMap::new(), failures: Vec::new() };
    let features: Vec<String> = if cfg.features.is_empty() {
        Vec::new()
    } else {
        dataset.series.iter().map(|s| s.id.clone()).collect()
    };
    let config = cfg.snapshot();
    for &strategy in &cfg.strategies {
        for &horizon in &cfg.horizons {
            let prepared = prepare(dataset, strategy, horizon, cfg, templates, &mut outcome.failures)?;
            let bundles: Vec<PromptBundle> = prepared.iter().map(|p| p.bundle.clone()).collect();
            let responses = gateway.dispatch(&bundles);
            let mut results = Vec::with_capacity(prepared.len());
            for (p, resp) in prepared.iter().zip(responses) {
                match resp {
                    Ok(r) => results.push(score(strategy, &p.window, &r, cfg)),
                    Err(e) => outcome.failures.push(WindowFailure::from_error(
                        strategy,
                        horizon,
                        &p.window.id(),
                        e.into(),
                    )),
                }
            }
            if results.is_empty() {
                continue;
            }
            let meta = RunMeta {
                dataset: dataset.name.clone(),
                features: features.clone(),
                strategy: strategy.name().into(),
                horizon,
                template_version: templates.template(strategy).version,
                backend_id: gateway.backend_id(),
                config: config.clone(),
            };
            match aggregate(&results, meta) {
                Ok(report) => outcome.reports.push(report),
                Err(e) => outcome.failures.push(WindowFailure {
                    strategy: strategy.name().into(),
                    horizon,
                    window: "*".into(),
                    message: e.to_string(),
                }),
            }
            outcome.windows.insert(cell_key(strategy, horizon), results);
        }
    }
    Ok(outcome)
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_at: String,
    pub dataset: String,
    pub dataset_sha256: Option<String>,
    pub template_version: String,
    pub template_hashes: BTreeMap<String, String>,
    pub backend_id: String,
    pub config: serde_json::Value,
    pub reports: usize,
    pub failures: Vec<WindowFailure>,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, dataset: &Dataset, templates: &TemplateSet, backend_id: String, outcome: &RunOutcome) -> Self {
        let dataset_sha256 = cfg
            .dataset
            .as_ref()
            .and_then(|p| std::fs::read(p).ok())
            .map(|bytes| hex::encode(Sha256::digest(bytes)));
        let template_hashes = Strategy::ALL
            .iter()
            .map(|&s| (s.name().to_string(), hex::encode(Sha256::digest(templates.template(s).system_text.as_bytes()))))
            .collect();
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            dataset: dataset.name.clone(),
            dataset_sha256,
            template_version: templates.version.clone(),
            template_hashes,
            backend_id,
            config: cfg.snapshot(),
            reports: outcome.reports.len(),
            failures: outcome.failures.clone(),
        }
    }
}

/// The manifest path written next to a report: `r.json` -> `r.manifest.json`.
pub fn manifest_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes the reports (format from the config or the file extension) and
/// the run manifest next to them.
pub fn write_outputs(path: &Path, cfg: &RunConfig, manifest: &RunManifest, outcome: &RunOutcome) -> Result<()> {
    let format = cfg.format.unwrap_or_else(|| ReportFormat::from_path(path));
    emit_report(&outcome.reports, format, path)?;
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))? + "\n";
    std::fs::write(&mpath, text).map_err(|e| Error::io(mpath.display().to_string(), e))
}

/// Loads, runs and writes outputs for a configuration.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let templates = load_templates(cfg)?;
    let gateway = Gateway::from_config(&cfg.backend)?;
    let outcome = run(cfg, &dataset, &templates, &gateway)?;
    if let Some(out) = &cfg.out {
        let manifest = RunManifest::new(cfg, &dataset, &templates, gateway.backend_id(), &outcome);
        write_outputs(out, cfg, &manifest, &outcome)?;
    }
    Ok(outcome)
}

/// Runs a configuration against the live HTTP backend and records every
/// response to `fixtures` for later replay.
pub fn record(cfg: &RunConfig, fixtures: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.backend.kind != crate::gateway::BackendKind::Http {
        return Err(crate::gateway::GatewayError::NotRecordable(cfg.backend.kind.name().into()).into());
    }
    let dataset = load_dataset(cfg)?;
    let templates = load_templates(cfg)?;
    let recorder = std::sync::Arc::new(RecordingBackend::new(crate::gateway::build_backend(&cfg.backend)?));
    let gateway = Gateway::new(recorder.clone(), cfg.backend.parallelism);
    let outcome = run(cfg, &dataset, &templates, &gateway)?;
    recorder.write(fixtures)?;
    if let Some(out) = &cfg.out {
        let manifest = RunManifest::new(cfg, &dataset, &templates, gateway.backend_id(), &outcome);
        write_outputs(out, cfg, &manifest, &outcome)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Series;
    use crate::gateway::{BackendConfig, BackendKind};

    fn dataset(values: Vec<f64>) -> Dataset {
        let mut ds = Dataset::new(
            "synthetic",
            vec![
                Series::regular("a", 0, 600, values.clone()).unwrap(),
                Series::regular("b", 0, 600, values.iter().map(|v| v * 2.0).collect()).unwrap(),
            ],
        )
        .unwrap();
        ds.name = "synthetic".into();
        ds
    }

    fn cfg(kind: BackendKind) -> RunConfig {
        RunConfig {
            context_len: 12,
            horizons: vec![1, 3],
            stride: 4,
            max_windows: 5,
            backend: BackendConfig { kind, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn subsampling_is_seeded_and_bounded() {
        let ds = dataset((0..200).map(|i| i as f64).collect());
        let c = cfg(BackendKind::MockPersistence);
        let a = eval_windows(&ds, "a", 3, &c).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, eval_windows(&ds, "a", 3, &c).unwrap());
        assert!(a.windows(2).all(|w| w[0].context_start < w[1].context_start));
        assert!(a.iter().all(|w| w.context_start >= 12 && (w.context_start - 12) % 4 == 0));
        let other = eval_windows(&ds, "a", 3, &RunConfig { seed: 7, ..c.clone() }).unwrap();
        assert_ne!(a, other);
        let all = eval_windows(&ds, "a", 3, &RunConfig { max_windows: 1000, ..c }).unwrap();
        assert_eq!(all.len(), (200 - 12 - 3 - 12) / 4 + 1);
    }

    #[test]
    fn constant_series_is_forecast_exactly() {
        let ds = dataset(vec![3.25; 80]);
        let c = cfg(BackendKind::MockPersistence);
        let gw = Gateway::from_config(&c.backend).unwrap();
        let out = run(&c, &ds, &TemplateSet::builtin(), &gw).unwrap();
        assert!(out.succeeded(), "{:?}", out.failures);
        assert_eq!(out.reports.len(), 9 * 2);
        for r in &out.reports {
            assert_eq!(r.mean_mse, 0.0);
            assert_eq!(r.mean_mae, 0.0);
            assert_eq!(r.n_parsed, r.n_windows);
            assert_eq!(r.backend_id, "mock-persistence");
        }
    }

    #[test]
    fn feature_selection() {
        let ds = dataset(vec![1.0; 40]);
        let picked = select_features(ds.clone(), &["b".into()]).unwrap();
        assert_eq!(picked.series.len(), 1);
        assert_eq!(picked.series[0].id, "b");
        assert!(select_features(ds, &["zz".into()]).is_err());
    }

    #[test]
    fn neighbor_strategies_fail_without_history() {
        let ds = dataset((0..40).map(|i| i as f64).collect());
        let c = RunConfig {
            warmup: Some(0),
            strategies: vec![Strategy::Neighs],
            horizons: vec![1],
            same_series_neighbors: true,
            ..cfg(BackendKind::MockLinear)
        };
        let gw = Gateway::from_config(&c.backend).unwrap();
        let out = run(&c, &ds, &TemplateSet::builtin(), &gw).unwrap();
        assert!(!out.succeeded());
        assert!(out.failures.iter().any(|f| f.window == "a@0" && f.message.contains("neighs h=1 window a@0")));
        assert_eq!(out.reports.len(), 1);
    }

    #[test]
    fn outputs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("flat.csv");
        let mut text = String::from("ts,x\n");
        for i in 0..60 {
            text.push_str(&format!("{},{}\n", i * 600, 1.5));
        }
        std::fs::write(&csv, text).unwrap();
        let out = dir.path().join("r.json");
        let c = RunConfig {
            dataset: Some(csv),
            out: Some(out.clone()),
            strategies: vec![Strategy::Zeroshot],
            ..cfg(BackendKind::MockPersistence)
        };
        let outcome = execute(&c).unwrap();
        assert_eq!(outcome.reports.len(), 2);
        let reports = crate::evaluation::read_reports(&out).unwrap();
        assert_eq!(reports, outcome.reports);
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.dataset, "flat");
        assert_eq!(manifest.reports, 2);
        assert!(manifest.dataset_sha256.is_some());
        assert_eq!(manifest.template_hashes.len(), 9);
    }

    #[test]
    fn record_requires_http() {
        let c = cfg(BackendKind::MockLinear);
        assert!(matches!(record(&c, Path::new("x.jsonl")), Err(Error::Gateway(_))));
    }
}
