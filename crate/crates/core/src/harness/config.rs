//! Experiment documents: the user-facing JSON form of an experiment, with
//! angles in degrees and lengths in meters (noise in millimeters).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demo;
use crate::estimator::{EkfConfig, Mode, RelativeLinearization};
use crate::exec::ExecPolicy;
use crate::grouping::{check_jmms, GroupDocument};
use crate::jmm::{load_jmm, PolynomialJmm};
use crate::model::{load_model_file, KinematicModel};

use super::build::{build_jmm, BuildRequest};
use super::experiment::{ExperimentConfig, ExperimentSetup};
use super::trajectory::TrajectoryKind;
use super::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    /// `random_walk`, `sinusoid`, `replay` or `stationary`.
    pub kind: Option<String>,
    pub ticks: Option<usize>,
    pub step_sigma_deg: Option<f64>,
    pub seed: Option<u64>,
    pub start_deg: BTreeMap<String, f64>,
    pub period_ticks: Option<f64>,
    pub amplitude_fraction: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub measurement_sigma_m: Option<f64>,
    pub calibration_offset_deg: BTreeMap<String, f64>,
    pub length_bias_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfSection {
    pub mode: Option<Mode>,
    pub process_noise_std_deg: Option<f64>,
    pub observation_noise_std_mm: Option<f64>,
    pub initial_std_deg: Option<f64>,
    pub pinv_tolerance: Option<f64>,
    pub linearization: Option<RelativeLinearization>,
    pub overwrite_shared: Option<bool>,
    pub max_innovation_condition: Option<f64>,
}

/// Settings for fitting mappings on the fly when no JMM files are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub samples_per_joint: usize,
    pub degree: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            samples_per_joint: 7,
            degree: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentDocument {
    /// Model file, or `demo:<name>` for a bundled model.
    pub model: Option<String>,
    /// Group file; bundled models fall back to their own groups.
    pub groups: Option<PathBuf>,
    /// Mapping file per group name. Groups not listed use the file named in
    /// their group entry when it exists next to the group file, and are
    /// fitted on the fly otherwise.
    pub jmms: BTreeMap<String, PathBuf>,
    pub fit: FitSection,
    pub trajectory: TrajectorySection,
    pub noise: NoiseSection,
    pub ekf: EkfSection,
    pub initial_estimate_deg: BTreeMap<String, f64>,
    pub convergence_threshold_deg: Option<f64>,
}

fn per_joint(
    model: &KinematicModel,
    map: &BTreeMap<String, f64>,
    what: &str,
) -> Result<Option<Vec<f64>>, HarnessError> {
    if map.is_empty() {
        return Ok(None);
    }
    let mut out = vec![0.0; model.dof()];
    for (name, &deg) in map {
        let j = model
            .joint_index(name)
            .ok_or_else(|| HarnessError::Config(format!("{what}: model has no joint `{name}`")))?;
        out[j] = deg.to_radians();
    }
    Ok(Some(out))
}

impl ExperimentDocument {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut doc = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            doc.resolve_relative_to(dir);
        }
        Ok(doc)
    }

    /// Makes file references relative to `dir` absolute.
    pub fn resolve_relative_to(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(m) = &mut self.model {
            if !m.starts_with("demo:") && Path::new(m.as_str()).is_relative() {
                *m = dir.join(m.as_str()).to_string_lossy().into_owned();
            }
        }
        if let Some(g) = &mut self.groups {
            fix(g);
        }
        for p in self.jmms.values_mut() {
            fix(p);
        }
        if let Some(p) = &mut self.trajectory.path {
            fix(p);
        }
    }

    pub fn load_model(&self) -> Result<KinematicModel, HarnessError> {
        let spec = self
            .model
            .as_deref()
            .ok_or_else(|| HarnessError::Config("no model given".into()))?;
        match spec.strip_prefix("demo:") {
            Some(name) => demo::model(name),
            None => Ok(load_model_file(spec)?),
        }
    }

    pub fn load_groups(&self) -> Result<GroupDocument, HarnessError> {
        match (
            &self.groups,
            self.model.as_deref().and_then(|m| m.strip_prefix("demo:")),
        ) {
            (Some(path), _) => Ok(GroupDocument::load(path)?),
            (None, Some(name)) => demo::groups(name),
            (None, None) => Err(HarnessError::Config("no group file given".into())),
        }
    }

    /// Loads the model, groups and mappings; groups without a mapping file
    /// get one fitted over their joint limits.
    pub fn setup(&self, exec: ExecPolicy) -> Result<ExperimentSetup, HarnessError> {
        let model = self.load_model()?;
        let set = self.load_groups()?.validate()?;
        for name in self.jmms.keys() {
            if !set.groups().iter().any(|g| &g.name == name) {
                return Err(HarnessError::Config(format!(
                    "jmms: no group named `{name}`"
                )));
            }
        }
        let group_dir = self.groups.as_deref().and_then(Path::parent);
        let mut jmms: Vec<PolynomialJmm> = Vec::with_capacity(set.groups().len());
        for group in set.groups() {
            let listed = group_dir
                .map(|dir| dir.join(&group.jmm))
                .filter(|p| p.is_file());
            let jmm = match self.jmms.get(&group.name).cloned().or(listed) {
                Some(path) => load_jmm(path)?,
                None => {
                    let request = BuildRequest::over_limits(
                        &model,
                        group.joint_order(),
                        group.muscles.clone(),
                        self.fit.samples_per_joint,
                        self.fit.degree,
                    )?;
                    build_jmm(&model, &request, exec)?.0
                }
            };
            jmms.push(jmm);
        }
        check_jmms(&set, &jmms.iter().map(Some).collect::<Vec<_>>())?;
        let label = self.model.clone().unwrap_or_default();
        ExperimentSetup::new(label, model, set, jmms)
    }

    /// Converts to internal units against `model`.
    pub fn experiment_config(
        &self,
        model: &KinematicModel,
    ) -> Result<ExperimentConfig, HarnessError> {
        let mut config = ExperimentConfig::default();
        let t = &self.trajectory;
        let ts = &mut config.trajectory;
        ts.kind = match t.kind.as_deref().unwrap_or("random_walk") {
            "random_walk" => TrajectoryKind::RandomWalk,
            "stationary" => TrajectoryKind::Stationary,
            "sinusoid" => TrajectoryKind::Sinusoid {
                period_ticks: t.period_ticks.unwrap_or(200.0),
                amplitude_fraction: t.amplitude_fraction.unwrap_or(0.8),
            },
            "replay" => TrajectoryKind::Replay {
                path: t.path.clone().ok_or_else(|| {
                    HarnessError::Config("trajectory.path is required for replay".into())
                })?,
            },
            other => {
                return Err(HarnessError::Config(format!(
                    "trajectory.kind: unknown kind `{other}`"
                )))
            }
        };
        if let Some(v) = t.ticks {
            ts.ticks = v;
        }
        if let Some(v) = t.step_sigma_deg {
            ts.step_sigma = v.to_radians();
        }
        if let Some(v) = t.seed {
            ts.seed = v;
        }
        ts.start = per_joint(model, &t.start_deg, "trajectory.start_deg")?;

        if let Some(v) = self.noise.measurement_sigma_m {
            config.noise.measurement_sigma = v;
        }
        if let Some(v) = self.noise.length_bias_m {
            config.noise.length_bias = v;
        }
        config.noise.calibration_offset = per_joint(
            model,
            &self.noise.calibration_offset_deg,
            "noise.calibration_offset_deg",
        )?
        .unwrap_or_default();

        let e = &self.ekf;
        let ekf: &mut EkfConfig = &mut config.ekf;
        if let Some(v) = e.mode {
            ekf.mode = v;
        }
        if let Some(v) = e.process_noise_std_deg {
            ekf.process_noise_q = v.to_radians().powi(2);
        }
        if let Some(v) = e.observation_noise_std_mm {
            ekf.observation_noise_r = (v * 1e-3).powi(2);
        }
        if let Some(v) = e.initial_std_deg {
            ekf.initial_covariance_p0 = v.to_radians().powi(2);
        }
        if let Some(v) = e.pinv_tolerance {
            ekf.pinv_tolerance = v;
        }
        if let Some(v) = e.linearization {
            ekf.linearization = v;
        }
        if let Some(v) = e.overwrite_shared {
            ekf.overwrite_shared = v;
        }
        if let Some(v) = e.max_innovation_condition {
            ekf.max_innovation_condition = v;
        }
        config.initial_estimate =
            per_joint(model, &self.initial_estimate_deg, "initial_estimate_deg")?
                .unwrap_or_default();
        if let Some(v) = self.convergence_threshold_deg {
            config.convergence_threshold = v.to_radians();
        }
        Ok(config)
    }
}
