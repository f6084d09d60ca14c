use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("index out of bounds: {0}")]
    Bounds(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("non-finite value at sample {sample}")]
    Numeric { sample: usize },
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("no head for unseen domain {domain}")]
    NoHead { domain: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
