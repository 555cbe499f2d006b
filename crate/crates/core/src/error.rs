use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate distribution: sum of lambda_i / i is zero")]
    DegenerateDistribution,

    #[error("regular ({d_v},{d_c}) ensemble has non-positive rate")]
    NonPositiveRate { d_v: u32, d_c: u32 },

    #[error("code '{0}' is not check-regular")]
    NotCheckRegular(String),

    #[error("invalid code spec: {0}")]
    InvalidCode(String),

    #[error("invalid palette: {0}")]
    InvalidPalette(String),

    #[error("threshold undefined: lambda(1 - rho(1 - x)) vanishes on the whole grid")]
    ThresholdUndefined,

    #[error("design constraints are contradictory: {0}")]
    InfeasibleDesign(String),

    #[error(
        "threshold mismatch for {label}: bisection {bisection:.6}, recomputed {recomputed:.6}"
    )]
    ThresholdMismatch {
        label: String,
        bisection: f64,
        recomputed: f64,
    },

    #[error("word length {word} does not match code length {code}")]
    LengthMismatch { word: usize, code: usize },

    #[error("invalid parity-check matrix: {0}")]
    InvalidMatrix(String),

    #[error("cannot balance edge counts: {0}")]
    EdgeImbalance(String),

    #[error("cluster size {0} outside 1..=10")]
    ClusterSize(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cell {0} has no user")]
    EmptyCell(usize),

    #[error("calibration needs at least {needed} SINR samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("unknown code label '{0}'")]
    UnknownCode(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}
