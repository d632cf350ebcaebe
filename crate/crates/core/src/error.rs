use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unsupported derivative order {requested} (available {available})")]
    UnsupportedOrder { requested: usize, available: usize },
    #[error("accuracy: {0}")]
    Accuracy(String),
    #[error("flow singularity at t = {t}: {reason}")]
    FlowSingularity { t: f64, reason: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("integration accuracy: {0}")]
    IntegrationAccuracy(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("gauge drift {drift:e} exceeds {limit:e}")]
    GaugeDrift { drift: f64, limit: f64 },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
