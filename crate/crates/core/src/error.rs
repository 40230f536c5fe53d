use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not Hermitian positive definite")]
    NotPositiveDefinite,

    #[error("quadrature did not reach tolerance {tolerance:e} within {max_subdivisions} subdivisions (estimated error {error:e})")]
    Quadrature {
        tolerance: f64,
        max_subdivisions: usize,
        error: f64,
    },

    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("subgroup {0} has a zero composite channel estimate")]
    ZeroEstimate(usize),

    #[error("composite estimate matrix is rank deficient; use a positive regularization")]
    RankDeficient,

    #[error("subgroup {0} has non-positive estimated gain; fractional power control is undefined")]
    NonPositiveSubgroupGain(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("pilot length {tau_p} must be smaller than the coherence block {tau}")]
    PrelogOutOfRange { tau_p: usize, tau: usize },

    #[error("unknown recipe {name:?}; valid recipes: {valid}")]
    UnknownRecipe { name: String, valid: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
