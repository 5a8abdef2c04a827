use thiserror::Error;

/// Errors raised by the boosting engine and its numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value {value} encountered in {context}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate scale: all residuals are zero")]
    DegenerateScale,

    #[error("no root for the M-scale equation: {0}")]
    NoRoot(String),

    #[error("gradient undefined: every residual lies in the flat region of the loss")]
    AllOutlying,

    #[error("trimming removed every observation")]
    EmptyTrimmedSet,

    #[error("data error: {0}")]
    Data(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical procedure itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::DegenerateScale
                | Error::NoRoot(_)
                | Error::AllOutlying
                | Error::EmptyTrimmedSet
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(context: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { context, value })
    }
}
