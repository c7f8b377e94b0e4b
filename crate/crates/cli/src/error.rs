//! Error taxonomy mapped to exit codes for scripting: configuration
//! problems exit 2, backend problems exit 3, data problems exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<cbu_store::StoreError> for CliError {
    fn from(error: cbu_store::StoreError) -> Self {
        CliError::Data(error.to_string())
    }
}

impl From<cbu_engine::EngineError> for CliError {
    fn from(error: cbu_engine::EngineError) -> Self {
        match error {
            cbu_engine::EngineError::Config(detail) => CliError::Config(detail),
            cbu_engine::EngineError::Template(e) => CliError::Config(e.to_string()),
            cbu_engine::EngineError::Store(e) => e.into(),
        }
    }
}

impl From<cbu_core::stats::StatsError> for CliError {
    fn from(error: cbu_core::stats::StatsError) -> Self {
        CliError::Data(error.to_string())
    }
}
