use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] linscale_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// `row` and `column` are 1-based and count the header row when present.
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("writing results: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        use linscale_core::Error as C;
        match self {
            Self::Core(C::InfeasibleBudget(_) | C::InsufficientBudget(_)) => 3,
            Self::Core(
                C::InvalidArgument(_) | C::InfeasibleR { .. } | C::InvalidStepSize { .. },
            ) => 2,
            Self::Core(_) | Self::Experiment(_) | Self::Output(_) => 4,
            Self::Io { .. } | Self::Parse { .. } | Self::InvalidInput(_) | Self::Config(_) => 2,
        }
    }
}
