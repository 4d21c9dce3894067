//! Extended-Kalman-filter joint-angle estimation.
//!
//! Every group runs its own filter over the state ordering
//! `estimated_joints ++ borrowed_joints`. The prediction integrates measured
//! length changes through the pseudo-inverse of the muscle Jacobian, masked so
//! that borrowed joints never move. The correction either compares absolute
//! calibrated lengths with the mapping ([`Mode::Absolute`]) or checks the
//! length changes against the Jacobian at the previous estimate
//! ([`Mode::Relative`]), which needs no calibration at all.

mod config;
mod coordinator;
mod filter;
mod linalg;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::jmm::JmmError;

pub use config::{EkfConfig, Mode, RelativeLinearization};
pub use coordinator::{step_group_set, GroupEstimator, GroupStep};
pub use filter::GroupFilter;
pub use linalg::{covariance_health, pseudo_inverse, CovarianceHealth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("{what}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("innovation covariance is numerically singular (condition {condition:e})")]
    SingularInnovation { condition: f64 },
    #[error("absolute mode needs calibrated absolute lengths in every frame")]
    MissingAbsolute,
    #[error("mapping does not match group: {0}")]
    JmmMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Jmm(#[from] JmmError),
    #[error("group `{group}`: {source}")]
    Group {
        group: String,
        #[source]
        source: Box<EstimatorError>,
    },
}

/// Posterior of one group's filter.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub tick: u64,
}

/// Output of the predict step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub theta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub tick: u64,
}

/// Filter internals of one update, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub prediction: DVector<f64>,
    pub residual: DVector<f64>,
    pub kalman_gain: DMatrix<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Measurements of one tick for one group's muscles.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    /// Length change since the previous tick, meters.
    pub delta_z: DVector<f64>,
    /// Calibrated absolute lengths, meters; only read in absolute mode.
    pub z_abs: Option<DVector<f64>>,
}

impl MeasurementFrame {
    pub fn relative(delta_z: DVector<f64>) -> Self {
        Self {
            delta_z,
            z_abs: None,
        }
    }

    pub fn absolute(delta_z: DVector<f64>, z_abs: DVector<f64>) -> Self {
        Self {
            delta_z,
            z_abs: Some(z_abs),
        }
    }
}
