use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pixel ({x}, {y}) lies outside the active detector area")]
    OutsideActiveArea { x: i64, y: i64 },

    #[error("emitter index {index} out of range for {len} emitters")]
    IndexError { index: usize, len: usize },

    #[error("{n} emitter(s): cross-correlation needs at least two emitters")]
    DegenerateSource { n: usize },

    #[error("event stream not time-ordered at record {index}")]
    UnsortedInput { index: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("no contrast maximum clears the noise floor")]
    NoSignal,

    #[error("cosine fit diverged for row {row}: {reason}")]
    FitDiverged { row: usize, reason: String },

    #[error("only {converged} converged row fits, need at least {required}")]
    TooFewFits { converged: usize, required: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("separation vectors do not close: residual {residual:.4}")]
    ClosureFailure { residual: f64 },

    #[error("{components} distinct components do not match any emitter count")]
    AmbiguousCount { components: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
