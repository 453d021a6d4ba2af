use thiserror::Error;

use crate::dataset::DatasetError;
use crate::evaluation::EvalError;
use crate::gateway::GatewayError;
use crate::neighbors::NeighborError;
use crate::parsing::ParseError;
use crate::patching::PatchError;
use crate::prompting::PromptError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each pipeline stage has its own error enum; this wraps
/// them so the pipeline and CLI can propagate with `?`.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{strategy} h={horizon} window {window}: {source}")]
    Window {
        strategy: String,
        horizon: usize,
        window: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
