use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, split by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, config or input files. Nothing was produced.
    #[error("{0:#}")]
    Validation(anyhow::Error),
    /// A stage failed while producing `artifact`.
    #[error("stage `{stage}` failed at {}: {cause:#}", artifact.display())]
    Stage {
        stage: String,
        artifact: PathBuf,
        cause: anyhow::Error,
    },
}

impl CliError {
    pub fn validation(e: impl Into<anyhow::Error>) -> Self {
        CliError::Validation(e.into())
    }

    pub fn stage(
        stage: impl Into<String>,
        artifact: impl Into<PathBuf>,
        cause: impl Into<anyhow::Error>,
    ) -> Self {
        CliError::Stage {
            stage: stage.into(),
            artifact: artifact.into(),
            cause: cause.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { .. } => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches an error class to fallible calls.
pub trait Classify<T> {
    /// Input problems: exit code 1.
    fn invalid(self) -> CliResult<T>;
    /// Processing problems in `stage` while producing `artifact`: exit code 2.
    fn in_stage(self, stage: &str, artifact: impl Into<PathBuf>) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> CliResult<T> {
        self.map_err(CliError::validation)
    }

    fn in_stage(self, stage: &str, artifact: impl Into<PathBuf>) -> CliResult<T> {
        self.map_err(|e| CliError::stage(stage, artifact, e))
    }
}
