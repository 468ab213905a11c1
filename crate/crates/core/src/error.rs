use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is not positive semidefinite: pivot {index} fell to {value:e}")]
    NotPsd { index: usize, value: f64 },

    #[error("matrix is singular or ill-conditioned: {0}")]
    Singular(String),

    #[error("{op} did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence {
        op: &'static str,
        sweeps: usize,
        residual: f64,
    },

    #[error("degenerate effective channel: singular value {index} is {value:e}, need {streams} streams")]
    DegenerateChannel {
        index: usize,
        value: f64,
        streams: usize,
    },

    #[error("invalid beam index set: {0}")]
    InvalidIndex(String),

    #[error("exhaustive search needs {combinations} candidates, above the cap of {cap}; use the greedy label search instead")]
    SearchTooLarge { combinations: u128, cap: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed {format} file: field `{field}`: {reason}")]
    Format {
        format: &'static str,
        field: String,
        reason: String,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}, last finite loss {last_finite}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        last_finite: f64,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Machine-readable category, used by the CLI for its exit status.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } | Error::InvalidIndex(_) | Error::InvalidArgument(_) => {
                "invalid-input"
            }
            Error::NotPsd { .. }
            | Error::Singular(_)
            | Error::NoConvergence { .. }
            | Error::DegenerateChannel { .. } => "numerical",
            Error::SearchTooLarge { .. } => "search-too-large",
            Error::Config { .. } => "config",
            Error::Format { .. } => "format",
            Error::Diverged { .. } => "diverged",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(format: &'static str, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            field: field.into(),
            reason: reason.into(),
        }
    }
}
