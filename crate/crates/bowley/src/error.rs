use std::path::PathBuf;

use bowley_core::vpbgd::EquilibriumReport;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const REFUSED: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: field `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] bowley_core::Error),
    /// The solver blew up; the partial report has already been written.
    #[error("solver diverged at outer iteration {iteration}")]
    Diverged {
        iteration: usize,
        report: Box<EquilibriumReport>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use bowley_core::Error as Core;
        match self {
            Error::Schema { .. } | Error::Config(_) | Error::Data { .. } | Error::Csv { .. } => {
                exit::CONFIG
            }
            Error::Core(Core::TooLarge(_)) => exit::REFUSED,
            Error::Core(
                Core::Config(_) | Core::Domain(_) | Core::InvalidSample(_) | Core::RankDeficient(_),
            ) => exit::CONFIG,
            Error::Diverged { .. } => exit::DIVERGED,
            Error::Core(_) | Error::Io { .. } => exit::FAILURE,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
