use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsmError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero bandwidth: samples have no spread")]
    ZeroBandwidth,

    #[error("{0} outside data support")]
    OutsideSupport(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("estimation failed at design point {index}: {source}")]
    DesignPoint {
        index: usize,
        #[source]
        source: Box<SsmError>,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SsmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SsmError {
    SsmError::InvalidParameter(msg.into())
}
