//! Joint-angle estimation for tendon-driven kinematic chains from muscle
//! length measurements.
//!
//! * [`model`]: kinematic trees with via-point muscle routing (ground truth).
//! * [`jmm`]: polynomial joint-muscle mappings fitted on joint-space grids.
//! * [`grouping`]: overlapping estimation groups and their selection matrices.
//! * [`estimator`]: EKF estimation from absolute lengths or from length
//!   changes only, coordinated across groups.
//! * [`harness`]: trajectory simulation, experiment runs, CSV logs and plots.
//! * [`demo`]: the shipped demo models and group layouts.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod estimator;
pub mod exec;
pub mod grouping;
pub mod harness;
pub mod jmm;
pub mod model;

pub use exec::ExecPolicy;
