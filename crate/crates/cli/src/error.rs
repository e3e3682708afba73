use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] degenlab::Error),
}

impl CliError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use degenlab::Error as E;
        match self {
            CliError::Schema { .. } => 2,
            CliError::Io { .. } => 1,
            CliError::Solver(e) => match e {
                E::ConditionViolation(_) | E::EtaDegenerate { .. } => 3,
                E::SingularSystem(_) => 4,
                E::NoContraction(_) | E::BallExit { .. } => 5,
                _ => 1,
            },
        }
    }

    /// Short machine-readable tag recorded in the manifest.
    pub fn kind(&self) -> &'static str {
        use degenlab::Error as E;
        match self {
            CliError::Schema { .. } => "SchemaError",
            CliError::Io { .. } => "IoError",
            CliError::Solver(e) => match e {
                E::ConditionViolation(_) => "ConditionViolation",
                E::EtaDegenerate { .. } => "EtaDegenerate",
                E::SingularSystem(_) => "SingularSystem",
                E::NoContraction(_) => "NoContraction",
                E::BallExit { .. } => "BallExit",
                E::CallbackFailure(_) => "CallbackFailure",
                E::DivisionByZero(_) => "DivisionByZero",
                _ => "SolverError",
            },
        }
    }
}
