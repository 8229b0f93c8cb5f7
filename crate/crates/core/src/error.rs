use std::io;

use crate::field::Grid;
use crate::pie::ReconState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: Grid, right: Grid },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("{0}")]
    Domain(String),

    #[error("degenerate state: {0}")]
    Degenerate(String),

    /// The data loss became non-finite. The state at the start of the failing
    /// iteration is kept for inspection.
    #[error("reconstruction diverged at iteration {iteration} (last finite loss {last_finite_loss:e})")]
    Diverged {
        iteration: usize,
        last_finite_loss: f64,
        state: Box<ReconState>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed array file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png encoding error: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Stable machine-readable category, used by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::GridMismatch { .. } | Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Degenerate(_) => "degenerate",
            Error::Diverged { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Format(_) | Error::Json(_) => "format",
            Error::Io(_) | Error::Png(_) => "io",
        }
    }

    /// Process exit code for the category. Zero is never returned.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "dimension" => 3,
            "domain" => 4,
            "degenerate" => 5,
            "divergence" => 6,
            "config" => 7,
            "format" => 8,
            "io" => 9,
            _ => 1,
        }
    }
}

pub(crate) fn ensure_same_grid(left: Grid, right: Grid) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::GridMismatch { left, right })
    }
}
