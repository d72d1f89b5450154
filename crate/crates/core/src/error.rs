use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("root solver failed: {message} (bracket [{lower}, {upper}], ess {ess_lower} .. {ess_upper})")]
    Solver {
        message: String,
        lower: f64,
        upper: f64,
        ess_lower: f64,
        ess_upper: f64,
    },

    #[error("tempering did not reach tau = {target} within {steps} steps (last tau {last})", last = trajectory.last().copied().unwrap_or(0.0))]
    TemperingStalled {
        target: f64,
        steps: usize,
        trajectory: Vec<f64>,
    },

    #[error("covariance factorization failed for every hyperparameter candidate; raise the nugget floor")]
    Conditioning,

    #[error("predictive acceptance rate {rate} below {min_rate}: emulator puts little mass on positive Beta parameters")]
    Extrapolation { rate: f64, min_rate: f64 },

    #[error("{context} (index {index}): {source}")]
    At {
        context: &'static str,
        index: usize,
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// The error beneath any `At` context wrappers.
    pub fn innermost(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.innermost(),
            e => e,
        }
    }

    /// Wraps the error with the index of the item that produced it.
    pub fn at(self, context: &'static str, index: usize) -> Self {
        Error::At {
            context,
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}
