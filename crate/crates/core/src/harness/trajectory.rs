use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::model::KinematicModel;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Gaussian step per joint per tick, reflected at the joint limits.
    RandomWalk,
    /// Per-joint sine waves through the start posture, phase-shifted between
    /// joints, swinging by up to `amplitude_fraction` of the distance from the
    /// start to the nearer limit.
    Sinusoid {
        period_ticks: f64,
        amplitude_fraction: f64,
    },
    /// Joint angles (degrees) read from a CSV file, one row per tick and one
    /// column per model joint, in model order. A header row is allowed.
    Replay { path: PathBuf },
    /// Holds the start posture.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub ticks: usize,
    /// Random-walk step standard deviation, radians per tick.
    pub step_sigma: f64,
    pub seed: u64,
    /// Initial posture, radians; defaults to the calibration posture.
    pub start: Option<Vec<f64>>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::RandomWalk,
            ticks: 1000,
            step_sigma: 0.5f64.to_radians(),
            seed: 0,
            start: None,
        }
    }
}

/// Folds `x` back into `[lo, hi]` by mirroring at the bounds.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if !x.is_finite() || width <= 0.0 {
        return x.clamp(lo, hi);
    }
    if x < lo - width || x > hi + width {
        // far outside: reduce onto one period of the mirrored pattern
        let period = 2.0 * width;
        let r = (x - lo).rem_euclid(period);
        x = if r <= width { lo + r } else { hi - (r - width) };
    }
    while x < lo || x > hi {
        x = if x > hi { 2.0 * hi - x } else { 2.0 * lo - x };
    }
    x
}

/// Generates `spec.ticks` postures starting at `start`; every posture lies
/// within the joint limits.
pub fn generate_trajectory(
    model: &KinematicModel,
    spec: &TrajectorySpec,
    start: &[f64],
) -> Result<Vec<Vec<f64>>, HarnessError> {
    let d = model.dof();
    if start.len() != d {
        return Err(HarnessError::Config(format!(
            "start posture has {} values, model has {d} joints",
            start.len()
        )));
    }
    for (joint, &v) in model.joints().iter().zip(start) {
        if !joint.contains(v) {
            return Err(HarnessError::Config(format!(
                "start angle {:.3} deg of `{}` is outside its limits",
                v.to_degrees(),
                joint.name
            )));
        }
    }
    if spec.ticks == 0 {
        return Err(HarnessError::Config(
            "trajectory needs at least one tick".into(),
        ));
    }
    let limits: Vec<(f64, f64)> = model.joints().iter().map(|j| j.range()).collect();
    let mut out = Vec::with_capacity(spec.ticks);
    match &spec.kind {
        TrajectoryKind::Stationary => {
            out.resize(spec.ticks, start.to_vec());
        }
        TrajectoryKind::RandomWalk => {
            if !(spec.step_sigma >= 0.0) || !spec.step_sigma.is_finite() {
                return Err(HarnessError::Config(
                    "step_sigma must be non-negative".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let step = Normal::new(0.0, spec.step_sigma)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut current = start.to_vec();
            out.push(current.clone());
            for _ in 1..spec.ticks {
                for (x, &(lo, hi)) in current.iter_mut().zip(&limits) {
                    *x = reflect(*x + rng.sample(step), lo, hi);
                }
                out.push(current.clone());
            }
        }
        TrajectoryKind::Sinusoid {
            period_ticks,
            amplitude_fraction,
        } => {
            if !(*period_ticks > 0.0) || !(0.0..=1.0).contains(amplitude_fraction) {
                return Err(HarnessError::Config(
                    "sinusoid needs period_ticks > 0 and amplitude_fraction in [0, 1]".into(),
                ));
            }
            let amps: Vec<f64> = start
                .iter()
                .zip(&limits)
                .map(|(&s, &(lo, hi))| 0.5 * amplitude_fraction * (s - lo).min(hi - s))
                .collect();
            for t in 0..spec.ticks {
                let phase = 2.0 * std::f64::consts::PI * t as f64 / period_ticks;
                out.push(
                    start
                        .iter()
                        .zip(&amps)
                        .zip(&limits)
                        .enumerate()
                        .map(|(j, ((&s, &a), &(lo, hi)))| {
                            (s + a * (phase + 0.7 * j as f64).sin() - a * (0.7 * j as f64).sin())
                                .clamp(lo, hi)
                        })
                        .collect(),
                );
            }
        }
        TrajectoryKind::Replay { path } => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .comment(Some(b'#'))
                .from_path(path)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            for (row, record) in reader.records().enumerate() {
                let record = record.map_err(|e| HarnessError::Io(e.to_string()))?;
                let values: Result<Vec<f64>, _> =
                    record.iter().map(|s| s.trim().parse::<f64>()).collect();
                let Ok(values) = values else {
                    if row == 0 {
                        continue; // header
                    }
                    return Err(HarnessError::Config(format!(
                        "replay row {row}: non-numeric value"
                    )));
                };
                if values.len() != d {
                    return Err(HarnessError::Config(format!(
                        "replay row {row}: expected {d} columns, found {}",
                        values.len()
                    )));
                }
                let posture: Vec<f64> = values
                    .iter()
                    .zip(&limits)
                    .map(|(v, &(lo, hi))| v.to_radians().clamp(lo, hi))
                    .collect();
                out.push(posture);
                if out.len() == spec.ticks {
                    break;
                }
            }
            if out.is_empty() {
                return Err(HarnessError::Config("replay file has no rows".into()));
            }
        }
    }
    Ok(out)
}
