use thiserror::Error;

/// Errors produced by the identification pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("sup ratio closed form only holds for symmetric test functions (p = {p}, q = {q})")]
    AsymmetricTestFunction { p: f64, q: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("time grid is not uniform at index {index}")]
    NonUniformGrid { index: usize },

    #[error("test function support [{a}, {b}] exceeds the time grid [{t0}, {t1}]")]
    SupportOutsideGrid { a: f64, b: f64, t0: f64, t1: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("covariance factorization failed even with jitter {jitter:e}")]
    CholeskyFailed { jitter: f64 },

    #[error("whitened system is rank deficient (rank {rank} < {cols}); increase gamma or reduce basis overlap")]
    RankDeficient { rank: usize, cols: usize },

    #[error("cannot infer a timescale: data has no nonzero Fourier mode")]
    NoDominantMode,

    #[error("record too short: {0}")]
    RecordTooShort(String),

    #[error("coordinate {dim} has zero total variation")]
    FlatChannel { dim: usize },

    #[error("no coordinate of the data varies")]
    NoVariation,

    #[error("no root for the test-function degree in p in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("integration step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory blew up (|x| > {bound:e}) at t = {t}")]
    Blowup { t: f64, bound: f64 },

    #[error("reference weights are identically zero")]
    ZeroReference,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
