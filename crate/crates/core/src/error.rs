use thiserror::Error;

/// Errors produced by the library layer.
///
/// The CLI maps these onto exit codes: domain/regime problems are exit 2,
/// size-cap problems are exit 3, everything else is exit 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{what} out of range: {value} (allowed {allowed})")]
    OutOfRange {
        what: &'static str,
        value: i128,
        allowed: String,
    },

    #[error("no metastable regime: {0}")]
    Regime(String),

    #[error("method precondition violated: {0}")]
    MethodPrecondition(String),

    #[error("size cap exceeded: need {required} vertices but cap is {cap}")]
    SizeCap { required: u64, cap: u64 },

    #[error("orbit too large: exceeded cap of {cap}")]
    OrbitTooLarge { cap: usize },

    #[error("malformed block geometry: {0}")]
    BlockGeometry(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::OutOfRange { .. }
            | Error::Regime(_)
            | Error::MethodPrecondition(_)
            | Error::BlockGeometry(_)
            | Error::TooFewSamples { .. } => 2,
            Error::SizeCap { .. } | Error::OrbitTooLarge { .. } => 3,
            Error::Structural(_) => 1,
        }
    }
}
