use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Correct against calibrated absolute muscle lengths.
    #[default]
    Absolute,
    /// Correct against length changes only.
    Relative,
}

/// Where the relative-mode observation Jacobian `H` is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeLinearization {
    /// At the prediction `θ_{k|k-1}`, while the residual uses the previous
    /// posterior.
    #[default]
    Predicted,
    /// Both at the previous posterior `θ_{k-1|k-1}`.
    Previous,
}

/// Noise parameters and switches of the filter. Variances are in SI units:
/// rad² for joint quantities, m² for muscle quantities. Per-name overrides
/// take precedence over the scalar defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    pub process_noise_q: f64,
    pub observation_noise_r: f64,
    pub initial_covariance_p0: f64,
    pub process_noise_overrides: BTreeMap<String, f64>,
    pub observation_noise_overrides: BTreeMap<String, f64>,
    pub initial_covariance_overrides: BTreeMap<String, f64>,
    /// Singular values below `pinv_tolerance · σ_max` are dropped from `G⁺`.
    pub pinv_tolerance: f64,
    pub mode: Mode,
    pub linearization: RelativeLinearization,
    /// Overwrite borrowed joints with their source group's estimate after
    /// every tick.
    pub overwrite_shared: bool,
    /// Largest innovation-covariance condition number accepted.
    pub max_innovation_condition: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            process_noise_q: 0.5f64.to_radians().powi(2),
            observation_noise_r: 0.5e-3f64.powi(2),
            initial_covariance_p0: 10f64.to_radians().powi(2),
            process_noise_overrides: BTreeMap::new(),
            observation_noise_overrides: BTreeMap::new(),
            initial_covariance_overrides: BTreeMap::new(),
            pinv_tolerance: 1e-8,
            mode: Mode::Absolute,
            linearization: RelativeLinearization::Predicted,
            overwrite_shared: true,
            max_innovation_condition: 1e12,
        }
    }
}

impl EkfConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let variances = [
            ("process_noise_q", self.process_noise_q),
            ("observation_noise_r", self.observation_noise_r),
            ("initial_covariance_p0", self.initial_covariance_p0),
        ];
        for (name, v) in variances {
            if !(v > 0.0) || !v.is_finite() {
                return Err(EstimatorError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        for (name, map) in [
            ("process_noise_overrides", &self.process_noise_overrides),
            (
                "observation_noise_overrides",
                &self.observation_noise_overrides,
            ),
            (
                "initial_covariance_overrides",
                &self.initial_covariance_overrides,
            ),
        ] {
            if let Some((key, _)) = map.iter().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
                return Err(EstimatorError::InvalidConfig(format!(
                    "{name}.{key} must be positive"
                )));
            }
        }
        if !(self.pinv_tolerance > 0.0 && self.pinv_tolerance < 1.0) {
            return Err(EstimatorError::InvalidConfig(
                "pinv_tolerance must lie in (0, 1)".into(),
            ));
        }
        if !(self.max_innovation_condition > 1.0) {
            return Err(EstimatorError::InvalidConfig(
                "max_innovation_condition must exceed 1".into(),
            ));
        }
        Ok(())
    }

    pub fn q_for(&self, joint: &str) -> f64 {
        *self
            .process_noise_overrides
            .get(joint)
            .unwrap_or(&self.process_noise_q)
    }

    pub fn r_for(&self, muscle: &str) -> f64 {
        *self
            .observation_noise_overrides
            .get(muscle)
            .unwrap_or(&self.observation_noise_r)
    }

    pub fn p0_for(&self, joint: &str) -> f64 {
        *self
            .initial_covariance_overrides
            .get(joint)
            .unwrap_or(&self.initial_covariance_p0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = EkfConfig::default();
        c.validate().unwrap();
        assert!((c.process_noise_q.sqrt().to_degrees() - 0.5).abs() < 1e-12);
        assert!((c.observation_noise_r.sqrt() - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        let c = EkfConfig {
            pinv_tolerance: 1.0,
            ..EkfConfig::default()
        };
        assert!(c.validate().is_err());
        let c = EkfConfig {
            observation_noise_r: 0.0,
            ..EkfConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = EkfConfig::default();
        c.process_noise_overrides.insert("j".into(), -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = EkfConfig::default();
        c.observation_noise_overrides.insert("m".into(), 2.0);
        assert_eq!(c.r_for("m"), 2.0);
        assert_eq!(c.r_for("other"), c.observation_noise_r);
    }
}
