use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// Radius or arclength element fell below the admissible threshold.
    #[error("degenerate curve at theta = {theta}: {reason}")]
    DegenerateCurve { theta: f64, reason: String },

    #[error("unrecoverable degeneracy at step {step} after {retries} rejected attempts")]
    Unrecoverable { step: usize, retries: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// True for the error kinds the CLI reports with the numeric-degeneracy exit code.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCurve { .. } | Error::Unrecoverable { .. }
        )
    }
}
