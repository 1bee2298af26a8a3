use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("engine: {0}")]
    Engine(#[from] laser_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("invalid report: {0}")]
    Report(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
