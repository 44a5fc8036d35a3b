use thiserror::Error;

use crate::gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("database error: {0}")]
    Database(String),

    #[error("database `{0}` has no user tables")]
    EmptySchema(String),

    #[error("SQL parse error: {0}")]
    SqlParse(String),

    #[error("linking response has no recognizable sections")]
    LinkingParse,

    #[error("statement rejected: only read-only queries may be executed ({0})")]
    RejectedStatement(String),

    #[error("generation failed: {0}")]
    Generation(#[source] GatewayError),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("knowledge base error: {0}")]
    KnowledgeBase(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<rusqlite::Error> for Error {
    fn from(err: rusqlite::Error) -> Self {
        Error::Database(err.to_string())
    }
}
