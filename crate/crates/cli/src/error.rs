use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{0}")]
    Core(#[from] qseal::Error),
    /// A networked session ended early; any partial transcript was saved.
    #[error("session aborted: {0}")]
    Aborted(qseal::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{passed} of {total} acceptance checks passed")]
    SelftestFailed { passed: usize, total: usize },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config { key: key.into(), message: message.to_string() }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 configuration, 3 empty candidate set, 4 transport, 5 selftest, 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config { .. } => 2,
            CliError::Core(qseal::Error::EmptyCandidateSet) => 3,
            CliError::Aborted(_) | CliError::Core(qseal::Error::Transport(_) | qseal::Error::VersionMismatch { .. }) => 4,
            CliError::SelftestFailed { .. } => 5,
            _ => 1,
        })
    }

    /// Extra advice printed after the error line.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(qseal::Error::Explosion { .. }) => Some("exact enumeration is capped here; try --method mc"),
            CliError::Core(qseal::Error::EmptyCandidateSet) => {
                Some("no string reaches the likelihood level; lower --delta or --epsilon")
            }
            _ => None,
        }
    }
}
