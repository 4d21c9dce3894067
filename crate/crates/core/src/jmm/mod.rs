//! Polynomial joint-muscle mappings: monomial bases, grid datasets,
//! least-squares fitting and analytic derivatives.

mod basis;
mod dataset;
mod file;
mod fit;
mod poly;

use thiserror::Error;

use crate::model::ModelError;

pub use basis::{basis_size, binomial, MonomialBasis, DEFAULT_BASIS_LIMIT};
pub use dataset::{count_grid, sample_grid, DatasetSpec, GridIndices, GridSampler, Sample};
pub use file::{jmm_from_json, jmm_to_json, load_jmm, save_jmm, JMM_FORMAT};
pub use fit::{fit, fit_grid, FitAccumulator, FitOutcome, Ridge};
pub use poly::{Normalization, PolynomialJmm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JmmError {
    #[error("basis would hold {count} monomials, above the limit of {limit}")]
    CapacityExceeded { count: u128, limit: usize },
    #[error("Gram matrix is singular (condition estimate {condition:e}); add a ridge term")]
    RankDeficient { condition: f64 },
    #[error("{samples} samples cannot determine {basis} coefficients")]
    InsufficientSamples { samples: u64, basis: usize },
    #[error("expected length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
