use knowself::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("missing artifact {0}; run the command that produces it first")]
    Missing(String),
    #[error("validation failed: {0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Missing(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Invalid(m),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    knowself::trainer::TrainError,
    knowself::runtime::RuntimeError,
    knowself::knowledge::KnowledgeError
);

/// Record errors mean the stored data disagrees with the tasks it names.
impl From<knowself::labeler::LabelError> for CliError {
    fn from(e: knowself::labeler::LabelError) -> Self {
        CliError::Invalid(e.to_string())
    }
}
