use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::estimator::{covariance_health, EkfConfig, GroupEstimator, MeasurementFrame};
use crate::exec::ExecPolicy;
use crate::grouping::{check_against_model, GroupSet};
use crate::jmm::PolynomialJmm;
use crate::model::KinematicModel;

use super::log::{EstimateColumn, LogRow, TrajectoryLog};
use super::sim::{simulate_measurements, NoiseSpec};
use super::trajectory::{generate_trajectory, TrajectorySpec};
use super::HarnessError;

/// The fixed inputs of an experiment: model, groups, and one fitted mapping
/// per group (in group order).
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub label: String,
    pub model: KinematicModel,
    pub groups: GroupSet,
    pub jmms: Vec<PolynomialJmm>,
}

impl ExperimentSetup {
    pub fn new(
        label: impl Into<String>,
        model: KinematicModel,
        groups: GroupSet,
        jmms: Vec<PolynomialJmm>,
    ) -> Result<Self, HarnessError> {
        check_against_model(&groups, &model)?;
        if jmms.len() != groups.groups().len() {
            return Err(HarnessError::Config(format!(
                "{} mappings supplied for {} groups",
                jmms.len(),
                groups.groups().len()
            )));
        }
        Ok(Self {
            label: label.into(),
            model,
            groups,
            jmms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub ekf: EkfConfig,
    /// Initial estimate per model joint, radians; empty means all zero.
    pub initial_estimate: Vec<f64>,
    /// Error bound used for the convergence tick, radians.
    pub convergence_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::default(),
            noise: NoiseSpec::default(),
            ekf: EkfConfig::default(),
            initial_estimate: Vec::new(),
            convergence_threshold: 2f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointMetrics {
    pub joint: String,
    /// Root-mean-square error over the final half of the ticks, radians.
    pub rmse_final_half: f64,
    /// Mean signed error over the final half, radians.
    pub bias_final_half: f64,
    /// Largest absolute error over all ticks, radians.
    pub max_error: f64,
    /// First tick from which the error stays below the threshold.
    pub convergence_tick: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotMetrics {
    pub group: String,
    pub joint: String,
    pub borrowed: bool,
    pub rmse_final_half: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HealthSummary {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Number of (tick, group) covariances that failed the health check.
    pub unhealthy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub ticks: usize,
    pub joints: Vec<JointMetrics>,
    pub slots: Vec<SlotMetrics>,
    pub health: HealthSummary,
}

impl Summary {
    pub fn joint(&self, name: &str) -> Option<&JointMetrics> {
        self.joints.iter().find(|j| j.joint == name)
    }

    pub fn slot(&self, group: &str, joint: &str) -> Option<&SlotMetrics> {
        self.slots
            .iter()
            .find(|s| s.group == group && s.joint == joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub log: TrajectoryLog,
    pub summary: Summary,
}

/// Simulates a trajectory, feeds the measurements through the grouped
/// estimator and records truth, measurements, estimates and errors.
///
/// The true motion starts at `trajectory.start`, or at the calibration
/// offset posture when unset; the estimator starts at `initial_estimate`.
/// An estimator failure aborts the run with the failing tick.
pub fn run_experiment(
    setup: &ExperimentSetup,
    config: &ExperimentConfig,
    exec: ExecPolicy,
) -> Result<ExperimentOutput, HarnessError> {
    let model = &setup.model;
    let d = model.dof();
    config.ekf.validate()?;
    if !(config.convergence_threshold > 0.0) {
        return Err(HarnessError::Config(
            "convergence_threshold must be positive".into(),
        ));
    }
    let start = match &config.trajectory.start {
        Some(s) => s.clone(),
        None => config.noise.offset_for(model)?,
    };
    let initial = if config.initial_estimate.is_empty() {
        vec![0.0; d]
    } else if config.initial_estimate.len() == d {
        config.initial_estimate.clone()
    } else {
        return Err(HarnessError::Config(format!(
            "initial estimate has {} values, model has {d} joints",
            config.initial_estimate.len()
        )));
    };

    let truth = generate_trajectory(model, &config.trajectory, &start)?;
    let meas = simulate_measurements(model, &truth, &config.noise, config.trajectory.seed)?;

    let estimator = GroupEstimator::new(&setup.groups, &setup.jmms, &config.ekf)?.with_exec(exec);
    let groups = setup.groups.groups();
    let muscle_idx: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| model.muscle_indices(&g.muscles))
        .collect::<Result<_, _>>()?;

    let mut columns = Vec::new();
    for g in groups {
        let n_est = g.estimated_joints.len();
        for (i, j) in g.joint_order().into_iter().enumerate() {
            columns.push(EstimateColumn {
                group: g.name.clone(),
                joint: j,
                borrowed: i >= n_est,
            });
        }
    }
    // authoritative (group, slot) per model joint that some group estimates
    let authoritative: Vec<(usize, String, usize, usize)> = model
        .joints()
        .iter()
        .enumerate()
        .filter_map(|(j, joint)| {
            setup
                .groups
                .estimator_of(&joint.name)
                .map(|src| (j, joint.name.clone(), src.group, src.index))
        })
        .collect();

    let mut states = estimator
        .initial_states(|name| model.joint_index(name).map(|j| initial[j]).unwrap_or(0.0))?;
    let mut health = HealthSummary {
        max_asymmetry: 0.0,
        min_eigenvalue: f64::INFINITY,
        unhealthy: 0,
    };
    let mut record_health = |states: &[crate::estimator::EstimatorState]| {
        for s in states {
            let h = covariance_health(&s.covariance);
            health.max_asymmetry = health.max_asymmetry.max(h.asymmetry);
            health.min_eigenvalue = health.min_eigenvalue.min(h.min_eigenvalue);
            if !h.is_healthy() {
                health.unhealthy += 1;
            }
        }
    };
    record_health(&states);

    let mut rows = Vec::with_capacity(truth.len());
    for (t, theta) in truth.iter().enumerate() {
        if t > 0 {
            let frames: Vec<MeasurementFrame> = muscle_idx
                .iter()
                .map(|idx| {
                    MeasurementFrame::absolute(
                        DVector::from_iterator(idx.len(), idx.iter().map(|&m| meas.delta_z[t][m])),
                        DVector::from_iterator(idx.len(), idx.iter().map(|&m| meas.z_abs[t][m])),
                    )
                })
                .collect();
            let steps = estimator
                .step(&states, &frames)
                .map_err(|source| HarnessError::EstimationFailed { tick: t, source })?;
            states = steps.into_iter().map(|s| s.state).collect();
            record_health(&states);
        }
        let estimates: Vec<f64> = states
            .iter()
            .flat_map(|s| s.theta.iter().copied())
            .collect();
        let errors = authoritative
            .iter()
            .map(|&(j, _, g, i)| states[g].theta[i] - theta[j])
            .collect();
        rows.push(LogRow {
            tick: t,
            truth: theta.clone(),
            delta_z: meas.delta_z[t].clone(),
            z_abs: Some(meas.z_abs[t].clone()),
            estimates,
            errors,
        });
    }

    let log = TrajectoryLog {
        header: fingerprint(setup, config, &columns)?,
        joint_names: model.joints().iter().map(|j| j.name.clone()).collect(),
        muscle_names: model.muscles().iter().map(|m| m.name.clone()).collect(),
        estimate_columns: columns,
        error_joints: authoritative.iter().map(|a| a.1.clone()).collect(),
        has_absolute: true,
        rows,
    };
    let summary = summarize(&log, model, config.convergence_threshold, health);
    Ok(ExperimentOutput { log, summary })
}

fn fingerprint(
    setup: &ExperimentSetup,
    config: &ExperimentConfig,
    columns: &[EstimateColumn],
) -> Result<Vec<(String, String)>, HarnessError> {
    let json = serde_json::to_string(config).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut header = vec![
        ("format".to_string(), "jae-log/1".to_string()),
        ("label".to_string(), setup.label.clone()),
        (
            "mode".to_string(),
            serde_json::to_value(config.ekf.mode)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        ),
        ("ticks".to_string(), config.trajectory.ticks.to_string()),
        ("seed".to_string(), config.trajectory.seed.to_string()),
    ];
    for (g, jmm) in setup.groups.groups().iter().zip(&setup.jmms) {
        header.push((
            format!("group.{}", g.name),
            format!(
                "estimated={};borrowed={};muscles={};degree={}",
                g.estimated_joints.join(","),
                g.borrowed_joints.join(","),
                g.muscles.join(","),
                jmm.basis().degree()
            ),
        ));
    }
    header.push(("config".to_string(), json));
    let borrowed: Vec<String> = columns
        .iter()
        .filter(|c| c.borrowed)
        .map(|c| format!("{}:{}", c.group, c.joint))
        .collect();
    header.push(("borrowed_columns".to_string(), borrowed.join(";")));
    Ok(header)
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn summarize(
    log: &TrajectoryLog,
    model: &KinematicModel,
    threshold: f64,
    health: HealthSummary,
) -> Summary {
    let n = log.rows.len();
    let half = n / 2;
    let joints = log
        .error_joints
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let series: Vec<f64> = log.rows.iter().map(|r| r.errors[k]).collect();
            let tail = &series[half..];
            let convergence_tick = match series.iter().rposition(|e| e.abs() >= threshold) {
                None => Some(0),
                Some(last) if last + 1 < n => Some(last + 1),
                Some(_) => None,
            };
            JointMetrics {
                joint: name.clone(),
                rmse_final_half: rms(tail),
                bias_final_half: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
                max_error: series.iter().fold(0.0, |m, e| m.max(e.abs())),
                convergence_tick,
            }
        })
        .collect();
    let slots = log
        .estimate_columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            let j = model.joint_index(&col.joint).expect("validated joint");
            let tail: Vec<f64> = log.rows[half..]
                .iter()
                .map(|r| r.estimates[c] - r.truth[j])
                .collect();
            SlotMetrics {
                group: col.group.clone(),
                joint: col.joint.clone(),
                borrowed: col.borrowed,
                rmse_final_half: rms(&tail),
            }
        })
        .collect();
    Summary {
        ticks: n,
        joints,
        slots,
        health,
    }
}
