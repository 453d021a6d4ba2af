//! Run configuration: a TOML file whose keys mirror the command-line flags.
//!
//! ```toml
//! dataset = "weather.csv"
//! horizons = [1, 3, 6]
//! strategies = ["zeroshot", "patch-instruct"]
//!
//! [backend]
//! kind = "http"
//! endpoint_url = "https://api.example.com/v1"
//! model_name = "gpt-4o"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ReportFormat;
use crate::gateway::BackendConfig;
use crate::neighbors::{PoolOptions, DEFAULT_K};
use crate::patching::{DEFAULT_STRIDE, DEFAULT_TREND_WINDOW, DEFAULT_WINDOW};
use crate::prompting::{PromptOptions, Strategy};

pub const DEFAULT_CONTEXT_LEN: usize = 96;
pub const DEFAULT_HORIZONS: [usize; 7] = [1, 2, 3, 4, 5, 6, 12];
pub const DEFAULT_MAX_WINDOWS: usize = 100;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// TOML column mapping for the dataset; see [`crate::dataset::CsvSchema`].
    pub schema: Option<PathBuf>,
    /// Series ids to forecast; empty selects every value column.
    pub features: Vec<String>,
    pub context_len: usize,
    pub horizons: Vec<usize>,
    /// Step between consecutive evaluation windows.
    pub stride: usize,
    /// Index of the first evaluation context; defaults to `context_len` so
    /// that every window has at least one past window to retrieve.
    pub warmup: Option<usize>,
    pub strategies: Vec<Strategy>,
    pub patch_window: usize,
    pub patch_stride: usize,
    pub trend_window: usize,
    pub k: usize,
    pub max_windows: usize,
    pub seed: u64,
    pub lenient: bool,
    pub znorm_neighbors: bool,
    pub same_series_neighbors: bool,
    pub neighbor_stride: usize,
    /// Values shown after each neighbor window; zero shows none.
    pub neighbor_continuation: usize,
    pub zeroshot_system: bool,
    pub pre_tokenized: bool,
    /// Directory overriding the built-in prompt templates.
    pub templates: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            schema: None,
            features: Vec::new(),
            context_len: DEFAULT_CONTEXT_LEN,
            horizons: DEFAULT_HORIZONS.to_vec(),
            stride: DEFAULT_CONTEXT_LEN,
            warmup: None,
            strategies: Strategy::ALL.to_vec(),
            patch_window: DEFAULT_WINDOW,
            patch_stride: DEFAULT_STRIDE,
            trend_window: DEFAULT_TREND_WINDOW,
            k: DEFAULT_K,
            max_windows: DEFAULT_MAX_WINDOWS,
            seed: DEFAULT_SEED,
            lenient: false,
            znorm_neighbors: false,
            same_series_neighbors: false,
            neighbor_stride: 1,
            neighbor_continuation: 0,
            zeroshot_system: false,
            pre_tokenized: false,
            templates: None,
            out: None,
            format: None,
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn warmup(&self) -> usize {
        self.warmup.unwrap_or(self.context_len)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return fail("horizons must be a non-empty list of positive integers");
        }
        if self.context_len < self.patch_window.max(1) {
            return fail("context_len must be at least max(patch_window, 1)");
        }
        if self.patch_window == 0 || self.patch_stride == 0 {
            return fail("patch_window and patch_stride must be >= 1");
        }
        if self.trend_window.is_multiple_of(2) {
            return fail("trend_window must be odd");
        }
        if self.stride == 0 || self.neighbor_stride == 0 {
            return fail("stride and neighbor_stride must be >= 1");
        }
        if self.k == 0 {
            return fail("k must be >= 1");
        }
        if self.max_windows == 0 {
            return fail("max_windows must be >= 1");
        }
        if self.strategies.is_empty() {
            return fail("at least one strategy is required");
        }
        self.backend.validate()?;
        Ok(())
    }

    pub fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            patch_window: self.patch_window,
            patch_stride: self.patch_stride,
            zeroshot_system: self.zeroshot_system,
            pre_tokenized: self.pre_tokenized,
            trend_window: self.trend_window,
        }
    }

    pub fn pool_options(&self) -> PoolOptions {
        PoolOptions {
            candidate_stride: self.neighbor_stride,
            same_series_only: self.same_series_neighbors,
            continuation: self.neighbor_continuation,
        }
    }

    /// The configuration as recorded in reports: everything that affects
    /// results, without output locations.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
            map.remove("format");
        }
        value
    }
}
