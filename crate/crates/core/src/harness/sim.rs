use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::model::KinematicModel;

use super::HarnessError;

/// Measurement corruption applied by the simulator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of the Gaussian noise on every length change, meters.
    pub measurement_sigma: f64,
    /// Posture at which the encoders read zero, radians per model joint.
    /// Empty means the zero posture.
    pub calibration_offset: Vec<f64>,
    /// Constant added to every stored absolute length, meters.
    pub length_bias: f64,
}

impl NoiseSpec {
    pub fn offset_for(&self, model: &KinematicModel) -> Result<Vec<f64>, HarnessError> {
        if self.calibration_offset.is_empty() {
            return Ok(vec![0.0; model.dof()]);
        }
        if self.calibration_offset.len() != model.dof() {
            return Err(HarnessError::Config(format!(
                "calibration offset has {} values, model has {} joints",
                self.calibration_offset.len(),
                model.dof()
            )));
        }
        for (joint, &v) in model.joints().iter().zip(&self.calibration_offset) {
            if !joint.contains(v) {
                return Err(HarnessError::Config(format!(
                    "calibration offset {:.3} deg of `{}` is outside its limits",
                    v.to_degrees(),
                    joint.name
                )));
            }
        }
        Ok(self.calibration_offset.clone())
    }
}

/// Simulated encoder readings for every model muscle at every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    /// `delta_z[t]` is the measured change from tick `t-1` to `t`; zero at
    /// tick 0.
    pub delta_z: Vec<Vec<f64>>,
    /// Stored absolute lengths: the tick-0 reading plus accumulated changes.
    pub z_abs: Vec<Vec<f64>>,
}

/// Noise stream seed derived from the trajectory seed.
fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6a09_e667_f3bc_c908
}

/// Produces length changes and stored absolute lengths along `trajectory`.
///
/// The encoders read zero at the calibration offset posture, so the tick-0
/// absolute reading is `L(θ_0) − L(θ_off) + bias`; later readings accumulate
/// the (noisy) measured changes.
pub fn simulate_measurements(
    model: &KinematicModel,
    trajectory: &[Vec<f64>],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Measurements, HarnessError> {
    if !(noise.measurement_sigma >= 0.0 && noise.measurement_sigma.is_finite()) {
        return Err(HarnessError::Config(
            "measurement_sigma must be non-negative".into(),
        ));
    }
    if !noise.length_bias.is_finite() {
        return Err(HarnessError::Config("length_bias must be finite".into()));
    }
    let offset = noise.offset_for(model)?;
    let reference = model.muscle_lengths(&offset)?.values;
    let m = model.muscle_count();
    let dist = Normal::new(0.0, noise.measurement_sigma)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed));

    let mut delta_z = Vec::with_capacity(trajectory.len());
    let mut z_abs: Vec<Vec<f64>> = Vec::with_capacity(trajectory.len());
    let mut previous: Option<Vec<f64>> = None;
    for posture in trajectory {
        let raw = model.muscle_lengths(posture)?.values;
        let lengths: Vec<f64> = raw.iter().copied().collect();
        match &previous {
            None => {
                delta_z.push(vec![0.0; m]);
                z_abs.push(
                    (0..m)
                        .map(|i| lengths[i] - reference[i] + noise.length_bias)
                        .collect(),
                );
            }
            Some(prev) => {
                let dz: Vec<f64> = (0..m)
                    .map(|i| {
                        let clean = lengths[i] - prev[i];
                        if noise.measurement_sigma > 0.0 {
                            clean + rng.sample(dist)
                        } else {
                            clean
                        }
                    })
                    .collect();
                let last = z_abs.last().expect("tick 0 pushed");
                let next: Vec<f64> = last.iter().zip(&dz).map(|(z, d)| z + d).collect();
                delta_z.push(dz);
                z_abs.push(next);
            }
        }
        previous = Some(lengths);
    }
    Ok(Measurements { delta_z, z_abs })
}
