use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid integration interval [{lower}, {upper}]")]
    Interval { lower: f64, upper: f64 },

    #[error("matrix is numerically singular (pivot magnitude {pivot:e})")]
    Singular { pivot: f64 },

    #[error("block ({row}, {col}) is outside a layout with {blocks} block rows")]
    BlockIndex {
        row: usize,
        col: usize,
        blocks: usize,
    },

    #[error("delay-bound: controller {} has delay {delay} outside [0, {period})", .controller + 1)]
    DelayBound {
        controller: usize,
        delay: f64,
        period: f64,
    },

    #[error("{invariant}: {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("coupling-singularity at step {step}{}: pivot magnitude {pivot:e}", controller_suffix(.controller))]
    CouplingSingular {
        step: usize,
        controller: Option<usize>,
        pivot: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerical recursion rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::CouplingSingular { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

fn controller_suffix(controller: &Option<usize>) -> String {
    controller
        .map(|i| format!(", controller {}", i + 1))
        .unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;
