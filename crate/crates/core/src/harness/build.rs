use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec::ExecPolicy;
use crate::jmm::{fit_grid, DatasetSpec, GridSampler, PolynomialJmm, Ridge};
use crate::model::KinematicModel;

use super::HarnessError;

/// What to fit: a joint subset, a muscle subset, the sampling grid and the
/// polynomial settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildRequest {
    pub joints: Vec<String>,
    pub muscles: Vec<String>,
    pub dataset: DatasetSpec,
    pub degree: usize,
    pub ridge: Ridge,
    /// Number of uniformly random poses used for the held-out check.
    pub heldout_poses: usize,
    pub heldout_seed: u64,
}

impl BuildRequest {
    /// Grid over the joints' full limits with `n` samples per joint.
    pub fn over_limits(
        model: &KinematicModel,
        joints: Vec<String>,
        muscles: Vec<String>,
        n: usize,
        degree: usize,
    ) -> Result<Self, HarnessError> {
        let idx = model.joint_indices(&joints)?;
        let dataset = DatasetSpec::from_joint_limits(model, &idx, vec![n; idx.len()])?;
        Ok(Self {
            joints,
            muscles,
            dataset,
            degree,
            ridge: Ridge::default(),
            heldout_poses: 1000,
            heldout_seed: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuscleResidual {
    pub muscle: String,
    /// Training root-mean-square residual, meters.
    pub training_rms: f64,
    /// Largest held-out `|f − oracle|`, meters.
    pub max_error: f64,
    pub mean_error: f64,
    /// Spread of the oracle length over the held-out poses, meters.
    pub length_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub joints: Vec<String>,
    pub muscles: Vec<String>,
    pub per_joint_samples: Vec<usize>,
    pub sample_count: u64,
    pub degree: usize,
    pub basis_size: usize,
    pub ridge_lambda: f64,
    pub gram_condition: f64,
    pub wall_time_s: f64,
    pub heldout_poses: usize,
    pub residuals: Vec<MuscleResidual>,
}

impl BuildReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Samples the model, fits the mapping and evaluates it on random poses
/// drawn uniformly from the grid ranges.
pub fn build_jmm(
    model: &KinematicModel,
    request: &BuildRequest,
    exec: ExecPolicy,
) -> Result<(PolynomialJmm, BuildReport), HarnessError> {
    let joints = model.joint_indices(&request.joints)?;
    let muscles = model.muscle_indices(&request.muscles)?;
    let started = Instant::now();
    let outcome = fit_grid(
        model,
        &request.dataset,
        &joints,
        &muscles,
        request.degree,
        request.ridge,
        exec,
    )?;
    let wall_time_s = started.elapsed().as_secs_f64();

    let sampler = GridSampler::new(model, &request.dataset, &joints, &muscles)?;
    let m = muscles.len();
    let mut max_error = vec![0.0f64; m];
    let mut sum_error = vec![0.0f64; m];
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    let mut rng = ChaCha8Rng::seed_from_u64(request.heldout_seed);
    for _ in 0..request.heldout_poses {
        let theta: Vec<f64> = request
            .dataset
            .ranges()
            .iter()
            .map(|&(a, b)| rng.random_range(a..=b))
            .collect();
        let oracle = sampler.sample_at(&theta)?;
        let fitted = outcome.jmm.evaluate(&theta)?;
        for i in 0..m {
            let e = (fitted[i] - oracle.lengths[i]).abs();
            max_error[i] = max_error[i].max(e);
            sum_error[i] += e;
            lo[i] = lo[i].min(oracle.lengths[i]);
            hi[i] = hi[i].max(oracle.lengths[i]);
        }
    }
    let n = request.heldout_poses.max(1) as f64;
    let residuals = (0..m)
        .map(|i| MuscleResidual {
            muscle: request.muscles[i].clone(),
            training_rms: outcome.training_rms[i],
            max_error: max_error[i],
            mean_error: sum_error[i] / n,
            length_range: if hi[i] >= lo[i] { hi[i] - lo[i] } else { 0.0 },
        })
        .collect();
    let report = BuildReport {
        joints: request.joints.clone(),
        muscles: request.muscles.clone(),
        per_joint_samples: request.dataset.per_joint_samples().to_vec(),
        sample_count: outcome.samples,
        degree: request.degree,
        basis_size: outcome.jmm.basis().len(),
        ridge_lambda: outcome.lambda,
        gram_condition: outcome.condition,
        wall_time_s,
        heldout_poses: request.heldout_poses,
        residuals,
    };
    Ok((outcome.jmm, report))
}
