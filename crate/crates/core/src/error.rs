use thiserror::Error;

/// Errors raised by the grid, transform, detection and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{value} is not invertible modulo {modulus}")]
    NotInvertible { value: i64, modulus: i64 },

    #[error("requested {requested} roots but only {available} are coprime to MN")]
    TooManyRoots { requested: usize, available: usize },

    #[error("{value} outside the open range (0, {limit})")]
    OutOfRange { value: i64, limit: i64 },

    #[error("root {0} is not coprime to MN")]
    InvalidRoot(u64),

    #[error("shift {0} is not coprime to both M and N")]
    InvalidShift(u64),

    #[error("invalid shift list: {0}")]
    InvalidShifts(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("roll-off {0} outside [0, 1]")]
    InvalidRollOff(f64),

    #[error(
        "dd line {dd_line} and tf line {tf_line} intersect at {crt_point}, which is not a configured root"
    )]
    NoIntersection {
        dd_line: usize,
        tf_line: usize,
        crt_point: u64,
    },

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("root {0} is not part of the sensing matrix")]
    UnknownRoot(u64),

    #[error("requested {requested} roots but the matrix only holds {blocks} blocks")]
    KTooLarge { requested: usize, blocks: usize },

    #[error("sensing matrix needs {needed} complex entries, cap is {cap}")]
    MatrixTooLarge { needed: usize, cap: usize },

    #[error("invalid channel profile: {0}")]
    InvalidProfile(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed sensing-matrix cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
