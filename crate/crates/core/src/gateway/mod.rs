//! LLM dispatch with token and latency accounting.
//!
//! Four backends share the [`Backend`] trait: an OpenAI-compatible HTTP
//! client, two deterministic mocks and a replay backend that serves recorded
//! responses by bundle hash.

mod fixtures;
mod http;
mod mock;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::PromptBundle;

pub use fixtures::{read_fixtures, write_fixtures, FixtureRecord, RecordingBackend, ReplayBackend};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockKind};

pub const API_KEY_ENV: &str = "TSF_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("no recorded response for bundle {hash} ({strategy} h={horizon} window {window_id})")]
    ReplayMiss { hash: String, window_id: String, strategy: String, horizon: usize },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("malformed prompt for mock backend: {0}")]
    MalformedPrompt(String),
    #[error("only the http backend can be recorded, not {0}")]
    NotRecordable(String),
    #[error("fixture error on {path}: {message}")]
    Fixture { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    MockPersistence,
    MockLinear,
    Replay,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::MockPersistence => "mock-persistence",
            BackendKind::MockLinear => "mock-linear",
            BackendKind::Replay => "replay",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [BackendKind::Http, BackendKind::MockPersistence, BackendKind::MockLinear, BackendKind::Replay]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GatewayError::Config(format!("unknown backend `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub timeout_seconds: u64,
    /// Retries after the first attempt, on transport errors and HTTP 429.
    pub max_retries: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_initial_ms: u64,
    pub parallelism: usize,
    pub fixture_path: Option<PathBuf>,
    /// Overrides the `TSF_API_KEY` environment variable. Never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::MockPersistence,
            endpoint_url: None,
            model_name: None,
            temperature: 0.0,
            timeout_seconds: 60,
            max_retries: 3,
            backoff_initial_ms: 1000,
            parallelism: 1,
            fixture_path: None,
            api_key: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Http => {
                if self.endpoint_url.is_none() || self.model_name.is_none() {
                    return Err(GatewayError::Config("http backend needs an endpoint and a model".into()));
                }
            }
            BackendKind::Replay
                if self.fixture_path.is_none() => {
                    return Err(GatewayError::Config("replay backend needs a fixture path".into()));
                }
            _ => {}
        }
        if self.parallelism == 0 {
            return Err(GatewayError::Config("parallelism must be >= 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Config("temperature must be a non-negative number".into()));
        }
        Ok(())
    }

    /// The API key from the config or the environment.
    pub fn resolve_api_key(&self) -> Result<String, GatewayError> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::Config(format!("{API_KEY_ENV} is not set")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    Reported,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_seconds: f64,
    pub backend_id: String,
    pub token_source: TokenSource,
}

/// Rough token count, `ceil(bytes / 4)`, for backends that report no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.len().div_ceil(4) as u64
}

/// Estimated prompt tokens for a bundle (system plus user message).
pub fn estimate_input_tokens(bundle: &PromptBundle) -> u64 {
    estimate_tokens(&bundle.system) + estimate_tokens(&bundle.user)
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError>;
}

/// Running totals across every response a gateway has returned.
#[derive(Debug, Default)]
pub struct Counters {
    pub requests: AtomicU64,
    pub failures: AtomicU64,
    pub input_tokens: AtomicU64,
    pub output_tokens: AtomicU64,
}

/// A backend plus atomic accounting and bounded-parallel dispatch.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    parallelism: usize,
    counters: Counters,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, parallelism: usize) -> Self {
        Gateway { backend, parallelism: parallelism.max(1), counters: Counters::default() }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(build_backend(cfg)?, cfg.parallelism))
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, GatewayError> {
        self.counters.requests.fetch_add(1, Ordering::Relaxed);
        let result = self.backend.complete(bundle);
        match &result {
            Ok(r) => {
                self.counters.input_tokens.fetch_add(r.input_tokens, Ordering::Relaxed);
                self.counters.output_tokens.fetch_add(r.output_tokens, Ordering::Relaxed);
            }
            Err(_) => {
                self.counters.failures.fetch_add(1, Ordering::Relaxed);
            }
        }
        result
    }

    /// Dispatches every bundle with at most `parallelism` requests in flight.
    /// Results come back in input order.
    pub fn dispatch(&self, bundles: &[PromptBundle]) -> Vec<Result<LlmResponse, GatewayError>> {
        if self.parallelism == 1 || bundles.len() < 2 {
            return bundles.iter().map(|b| self.complete(b)).collect();
        }
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| bundles.par_iter().map(|b| self.complete(b)).collect())
    }
}

pub fn build_backend(cfg: &BackendConfig) -> Result<Arc<dyn Backend>, GatewayError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Http => Arc::new(HttpBackend::new(cfg)?),
        BackendKind::MockPersistence => Arc::new(MockBackend::new(MockKind::Persistence)),
        BackendKind::MockLinear => Arc::new(MockBackend::new(MockKind::Linear)),
        BackendKind::Replay => {
            let path = cfg.fixture_path.as_ref().expect("validated");
            Arc::new(ReplayBackend::from_file(path)?)
        }
    })
}

/// One-shot completion through a backend built from `cfg`.
pub fn complete(bundle: &PromptBundle, cfg: &BackendConfig) -> Result<LlmResponse, GatewayError> {
    build_backend(cfg)?.complete(bundle)
}

/// Sends `bundles` to the HTTP backend and writes every response to a fixture
/// file for later replay.
pub fn record_fixtures(
    bundles: &[PromptBundle],
    cfg: &BackendConfig,
    out: &std::path::Path,
) -> Result<Vec<LlmResponse>, GatewayError> {
    if cfg.kind != BackendKind::Http {
        return Err(GatewayError::NotRecordable(cfg.kind.name().into()));
    }
    let recorder = Arc::new(RecordingBackend::new(build_backend(cfg)?));
    let gateway = Gateway::new(recorder.clone(), cfg.parallelism);
    let responses = gateway.dispatch(bundles).into_iter().collect::<Result<Vec<_>, _>>()?;
    recorder.write(out)?;
    Ok(responses)
}
