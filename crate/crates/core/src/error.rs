use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A spring collapsed below the degeneracy epsilon while it still has a
    /// positive rest length, so its force direction is undefined.
    #[error("spring {index} is degenerate: length {length:e} m with rest length {rest_length:e} m")]
    DegenerateSpring {
        index: usize,
        length: f64,
        rest_length: f64,
    },

    #[error("non-finite state at mass {index} on step {step}")]
    NonFinite { index: usize, step: u64 },

    #[error("invalid spring {index}: {reason}")]
    InvalidSpring { index: usize, reason: String },

    #[error("invalid mass {index}: {reason}")]
    InvalidMass { index: usize, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("joint selection for {part} holds {count} vertices, need at least {required}")]
    TooFewJointVertices {
        part: String,
        count: usize,
        required: usize,
    },

    #[error("joint rotation {delta} rad exceeds the per-call limit of {limit} rad")]
    RotationTooLarge { delta: f64, limit: f64 },

    #[error("part `{part}` has {count} masses, need at least {required}")]
    TooFewMasses {
        part: String,
        count: usize,
        required: usize,
    },

    #[error("unknown gait preset `{0}`")]
    UnknownGait(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
