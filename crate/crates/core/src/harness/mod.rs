//! Experiment harness: trajectories, simulated measurements, experiment
//! runs, JMM building reports, logs and plot scripts.

mod build;
mod config;
mod experiment;
mod log;
mod plots;
mod sim;
mod trajectory;

pub use build::{build_jmm, BuildReport, BuildRequest, MuscleResidual};
pub use config::{EkfSection, ExperimentDocument, FitSection, NoiseSection, TrajectorySection};
pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentOutput, ExperimentSetup, HealthSummary,
    JointMetrics, SlotMetrics, Summary,
};
pub use log::{EstimateColumn, LogRow, TrajectoryLog};
pub use plots::{emit_plots, PlotOutput};
pub use sim::{simulate_measurements, Measurements, NoiseSpec};
pub use trajectory::{generate_trajectory, reflect, TrajectoryKind, TrajectorySpec};

use crate::estimator::EstimatorError;
use crate::grouping::GroupError;
use crate::jmm::JmmError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Jmm(#[from] JmmError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("estimation failed at tick {tick}: {source}")]
    EstimationFailed {
        tick: usize,
        #[source]
        source: EstimatorError,
    },
    #[error("log has no rows")]
    EmptyLog,
}

impl HarnessError {
    /// Process exit status: 2 for failures during estimation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::EstimationFailed { .. } => 2,
            _ => 1,
        }
    }
}
