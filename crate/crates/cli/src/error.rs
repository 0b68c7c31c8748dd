use thiserror::Error;

/// Failures surfaced by the command-line front end. Each maps to a
/// process exit code through [`CliError::exit_code`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid configuration field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("cannot read configuration {path}: {source}")]
    ReadConfig {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Solver(#[from] capa_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Field { .. } | CliError::ReadConfig { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }
}
