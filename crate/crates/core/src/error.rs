use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("invalid kernel parameter: {0}")]
    InvalidKernelParam(String),
    #[error("refusing to allocate dense storage for N = {n} (limit {limit})")]
    TooLarge { n: usize, limit: usize },
    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),
    #[error("support violation for cube (j={j}, k={k}): {msg}")]
    Support { j: u32, k: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
