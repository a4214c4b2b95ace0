use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// `λ_min(D)/λ_max(D)` fell below [`crate::model::SINGULARITY_THRESHOLD`].
    #[error("diffusion matrix is singular: λ_min/λ_max = {ratio:e}")]
    SingularDiffusion { ratio: f64 },
    #[error("matrix is not symmetric: max |A - Aᵀ| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("transition covariance is indefinite after clamping: λ_min = {min_eigenvalue:e}")]
    CholeskyFailure { min_eigenvalue: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
