use votelab_core::engine::{EngineError, ErrorClass};
use votelab_core::export::ExportError;
use votelab_core::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("server answered {status}: {code}: {detail}")]
    Api { status: u16, code: String, detail: String },
    #[error("request failed: {0}")]
    Http(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("replayed state {replayed} differs from live state {live}")]
    ReplayMismatch { live: String, replayed: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Short machine-readable code printed with the message.
    pub fn code(&self) -> String {
        match self {
            CliError::Engine(e) => e.code().to_string(),
            CliError::Store(StoreError::CorruptEvent { .. }) => "CorruptEvent".into(),
            CliError::Store(StoreError::StorageFull { .. }) => "StorageFull".into(),
            CliError::Store(_) => "StorageError".into(),
            CliError::Export(_) => "ExportError".into(),
            CliError::Api { code, .. } => code.clone(),
            CliError::Http(_) => "HttpError".into(),
            CliError::Config(_) => "ConfigError".into(),
            CliError::Usage(_) => "UsageError".into(),
            CliError::ReplayMismatch { .. } => "ReplayMismatch".into(),
            CliError::Io(_) => "IoError".into(),
            CliError::Json(_) => "JsonError".into(),
        }
    }

    /// 0 success, 2 validation, 3 conflict, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Conflict => 3,
                _ => 1,
            },
            CliError::Api { status, .. } => match status {
                400 | 422 => 2,
                409 => 3,
                _ => 1,
            },
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
