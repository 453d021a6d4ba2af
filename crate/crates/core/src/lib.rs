//! Prompt-based LLM time-series forecasting harness.
//!
//! The pipeline turns a univariate context window into a prompt (optionally
//! with patch instructions and nearest-neighbor windows), sends it to an LLM
//! backend, parses the numeric answer and scores it against the ground truth.
//!
//! ```text
//! dataset -> windows -> [neighbors] -> prompting -> gateway -> parsing -> evaluation
//! ```
//!
//! Every stage except the HTTP backend is deterministic, and the offline
//! backends (`MockPersistence`, `MockLinear`, `Replay`) make whole runs
//! reproducible without network access.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod neighbors;
pub mod parsing;
pub mod patching;
pub mod pipeline;
pub mod prompting;

pub use config::RunConfig;
pub use dataset::{format_value, load_csv, slice_windows, CsvSchema, Dataset, EvalWindow, Series};
pub use error::{Error, Result};
pub use evaluation::{aggregate, emit_report, improvement, mae, mse, ReportFormat, RunReport, WindowResult};
pub use gateway::{complete, estimate_tokens, BackendConfig, BackendKind, Gateway, LlmResponse, TokenSource};
pub use neighbors::{build_pool, euclidean, top_k, CandidateWindow, NeighborSet};
pub use parsing::{parse_patches, parse_prediction, patch_fidelity, Forecast};
pub use patching::{Patch, PatchOrder, PatchSet, PatchStrategy};
pub use prompting::{assemble, PromptBundle, PromptTemplate, Strategy, TemplateSet};
