use std::path::PathBuf;

use crate::sde::StabilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported dimension {0}: operation requires {1}")]
    UnsupportedDimension(usize, &'static str),

    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("star at node {node}: {source}")]
    Star {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank-deficient star: {positive} positive weights but {unknowns} unknowns")]
    RankDeficient { positive: usize, unknowns: usize },

    #[error(
        "singular star (pivot {pivot:.3e} at row {row} <= tolerance {tolerance:.3e}); \
         increase M or change weights"
    )]
    SingularStar {
        row: usize,
        pivot: f64,
        tolerance: f64,
    },

    #[error("degenerate stencil: max theta_c = {0}")]
    DegenerateStencil(f64),

    #[error("stability condition violated: {0}")]
    Unstable(StabilityReport),

    #[error("non-finite value at step {step}, node {node} ({report})")]
    Overflow {
        step: usize,
        node: usize,
        report: StabilityReport,
    },

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Strips realization/star wrappers to reach the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Star { source, .. } | Error::Realization { source, .. } => source.root(),
            other => other,
        }
    }
}
