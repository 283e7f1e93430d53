use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] dmu_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use dmu_core::Error as C;
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::Io { .. } | Error::Format { .. } => EXIT_IO,
            Error::Numeric(_) => EXIT_NUMERIC,
            Error::Core(C::NonFinite(_) | C::Degenerate(_) | C::NoValidPixels | C::NonScalarLoss(_)) => EXIT_NUMERIC,
            Error::Core(C::Checkpoint(_)) => EXIT_IO,
            Error::Core(_) => EXIT_CONFIG,
        }
    }
}
