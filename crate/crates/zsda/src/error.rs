use std::path::PathBuf;

/// Errors from file formats, configuration and the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config file {0} does not exist and is not a preset name")]
    ConfigNotFound(PathBuf),
    #[error("{}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: format version {found}, this build reads version {expected}")]
    Version { path: PathBuf, found: u64, expected: u64 },
    #[error("{0} already exists; outputs are written once")]
    OutputExists(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] zsda_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl ToString) -> Self {
        Self::Parse { path: path.into(), line, msg: msg.to_string() }
    }

    /// Stable machine-readable category, printed as the first token of a
    /// failing command's error line.
    pub fn category(&self) -> &'static str {
        use zsda_core::Error as C;
        match self {
            Self::ConfigNotFound(_) => "config-not-found",
            Self::ConfigInvalid(_) => "config-invalid",
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Version { .. } => "version",
            Self::OutputExists(_) => "output-exists",
            Self::Usage(_) => "usage",
            Self::Core(e) => match e {
                C::Diverged { .. } | C::Numeric { .. } => "numeric",
                C::NoHead { .. } => "no-head",
                C::Unsupported(_) | C::UnsupportedDesign(_) => "unsupported",
                C::Argument(_) => "invalid-argument",
                C::Data(_) => "data",
                C::Shape(_) | C::Bounds(_) => "shape",
            },
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigNotFound(_) => 2,
            Self::ConfigInvalid(_) | Self::Usage(_) => 3,
            Self::Io { .. } | Self::OutputExists(_) => 4,
            Self::Parse { .. } | Self::Version { .. } => 5,
            Self::Core(_) => 6,
        }
    }
}
