use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },

    /// `last_finite` is the chain state before the offending step.
    #[error("langevin chain produced a non-finite energy at step {step}")]
    Sampler { step: usize, last_finite: Vec<f64> },

    #[error("distillation step {iteration} produced non-finite inputs; set rolled back")]
    Step { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for failures caused by floating-point blow-ups rather than
    /// bad inputs or IO.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Training { .. } | Error::Sampler { .. } | Error::Step { .. }
        )
    }

    /// True for unreadable, truncated or tampered files and IO failures.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Corruption(_) | Error::Io(_))
    }
}
