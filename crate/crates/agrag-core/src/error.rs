//! Error types shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AgragError>;

/// Top-level error type. Variants carry the pipeline stage they surfaced
/// from so CLI diagnostics can be stage-tagged.
#[derive(Debug, Error)]
pub enum AgragError {
    #[error("config error: {0}")]
    Config(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("statistics domain error: {0}")]
    Stats(String),

    #[error("provider error ({provider}): {message}")]
    Provider { provider: String, message: String },

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index corruption: {0}")]
    IndexCorruption(String),

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("index version mismatch: file has {found}, expected {expected}")]
    IndexVersion { found: u32, expected: u32 },

    #[error("index checksum mismatch")]
    IndexChecksum,

    #[error("ppr did not converge after {iterations} iterations (last delta {delta:e})")]
    PprNonConvergence { iterations: usize, delta: f64 },

    #[error("terminal {0} unreachable from the rest of the terminal set")]
    UnreachableTerminal(String),

    #[error("brute-force oracle refused: graph has {nodes} nodes, cap is {cap}")]
    OracleSizeCap { nodes: usize, cap: usize },

    #[error("bad selector: {0}")]
    Selector(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
