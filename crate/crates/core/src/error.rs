use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("state binding: {0}")]
    Binding(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid sweep axis: {0}")]
    InvalidAxis(String),
    #[error("unknown object id `{0}`")]
    UnknownId(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("loss must be a scalar, got shape {0}")]
    NonScalarLoss(String),
    #[error("no valid pixels to compare")]
    NoValidPixels,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("particle weights degenerated (sum {0})")]
    Degenerate(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
