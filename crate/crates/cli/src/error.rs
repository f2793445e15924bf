use thiserror::Error;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code when input data is missing, malformed or unscorable.
pub const EXIT_DATA: i32 = 1;
/// Exit code for invalid flags or configuration.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<contrastscore::ingest::IngestError> for CliError {
    fn from(e: contrastscore::ingest::IngestError) -> Self {
        match e {
            contrastscore::ingest::IngestError::Manifest { .. } => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}
