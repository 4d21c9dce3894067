use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::grouping::GroupSpec;
use crate::jmm::PolynomialJmm;

use super::linalg::{pseudo_inverse, symmetrize};
use super::{
    EkfConfig, EstimatorError, EstimatorState, MeasurementFrame, Mode, Prediction,
    RelativeLinearization, StepTrace,
};

/// One group's filter, bound to its fitted mapping.
#[derive(Debug, Clone)]
pub struct GroupFilter<'a> {
    spec: &'a GroupSpec,
    jmm: &'a PolynomialJmm,
    config: &'a EkfConfig,
    estimated: Vec<bool>,
    q: DVector<f64>,
    r: DVector<f64>,
    p0: DVector<f64>,
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<(), EstimatorError> {
    if expected != actual {
        return Err(EstimatorError::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_finite<'v>(
    what: &'static str,
    mut values: impl Iterator<Item = &'v f64>,
) -> Result<(), EstimatorError> {
    if values.any(|v| !v.is_finite()) {
        return Err(EstimatorError::NonFinite(what));
    }
    Ok(())
}

impl<'a> GroupFilter<'a> {
    pub fn new(
        spec: &'a GroupSpec,
        jmm: &'a PolynomialJmm,
        config: &'a EkfConfig,
    ) -> Result<Self, EstimatorError> {
        config.validate()?;
        let order = spec.joint_order();
        if jmm.joint_names() != order.as_slice() {
            return Err(EstimatorError::JmmMismatch(format!(
                "group `{}` orders joints {:?}, mapping has {:?}",
                spec.name,
                order,
                jmm.joint_names()
            )));
        }
        if jmm.muscle_names() != spec.muscles.as_slice() {
            return Err(EstimatorError::JmmMismatch(format!(
                "group `{}` lists muscles {:?}, mapping has {:?}",
                spec.name,
                spec.muscles,
                jmm.muscle_names()
            )));
        }
        let q = DVector::from_iterator(order.len(), order.iter().map(|j| config.q_for(j)));
        let p0 = DVector::from_iterator(order.len(), order.iter().map(|j| config.p0_for(j)));
        let r = DVector::from_iterator(
            spec.muscles.len(),
            spec.muscles.iter().map(|m| config.r_for(m)),
        );
        Ok(Self {
            spec,
            jmm,
            config,
            estimated: spec.estimated_mask(),
            q,
            r,
            p0,
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        self.spec
    }

    pub fn jmm(&self) -> &PolynomialJmm {
        self.jmm
    }

    pub fn config(&self) -> &EkfConfig {
        self.config
    }

    pub fn dof(&self) -> usize {
        self.estimated.len()
    }

    pub fn muscle_count(&self) -> usize {
        self.r.len()
    }

    /// Initial-covariance variance of state slot `i`.
    pub fn p0(&self, i: usize) -> f64 {
        self.p0[i]
    }

    /// State at tick 0 with covariance `diag(P0)`.
    pub fn initial_state(&self, theta: DVector<f64>) -> Result<EstimatorState, EstimatorError> {
        check_dim("initial theta", self.dof(), theta.len())?;
        check_finite("initial theta", theta.iter())?;
        Ok(EstimatorState {
            theta,
            covariance: DMatrix::from_diagonal(&self.p0),
            tick: 0,
        })
    }

    fn check_state(&self, state: &EstimatorState) -> Result<(), EstimatorError> {
        check_dim("state theta", self.dof(), state.theta.len())?;
        check_dim("state covariance", self.dof(), state.covariance.nrows())?;
        check_dim("state covariance", self.dof(), state.covariance.ncols())?;
        check_finite("state theta", state.theta.iter())
    }

    /// `θ_pred = θ + Sel · G⁺(θ) · δz`, `P_pred = P + Q`. Borrowed joints are
    /// left exactly as they were.
    pub fn predict(
        &self,
        state: &EstimatorState,
        frame: &MeasurementFrame,
    ) -> Result<Prediction, EstimatorError> {
        self.check_state(state)?;
        check_dim("delta_z", self.muscle_count(), frame.delta_z.len())?;
        check_finite("delta_z", frame.delta_z.iter())?;

        let g = self.jmm.jacobian(state.theta.as_slice())?;
        let increment = pseudo_inverse(&g, self.config.pinv_tolerance) * &frame.delta_z;
        let mut theta = state.theta.clone();
        for (i, &est) in self.estimated.iter().enumerate() {
            if est {
                theta[i] += increment[i];
            }
        }
        check_finite("prediction", theta.iter())?;
        let mut covariance = state.covariance.clone();
        for i in 0..self.dof() {
            covariance[(i, i)] += self.q[i];
        }
        Ok(Prediction {
            theta,
            covariance,
            tick: state.tick + 1,
        })
    }

    /// Shared EKF correction with observation Jacobian `h` and residual `e`.
    fn correct(
        &self,
        pred: &Prediction,
        h: &DMatrix<f64>,
        residual: DVector<f64>,
    ) -> Result<(EstimatorState, StepTrace), EstimatorError> {
        let p = &pred.covariance;
        let mut s = h * p * h.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += self.r[i];
        }
        symmetrize(&mut s);
        let eig = SymmetricEigen::new(s.clone());
        let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= self.config.max_innovation_condition) {
            return Err(EstimatorError::SingularInnovation { condition });
        }
        // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ with both factors symmetric
        let hp = h * p;
        let gain = match s.clone().cholesky() {
            Some(chol) => chol.solve(&hp).transpose(),
            None => return Err(EstimatorError::SingularInnovation { condition }),
        };
        let theta = &pred.theta + &gain * &residual;
        check_finite("posterior", theta.iter())?;
        let n = self.dof();
        let mut covariance = (DMatrix::identity(n, n) - &gain * h) * p;
        symmetrize(&mut covariance);
        Ok((
            EstimatorState {
                theta,
                covariance,
                tick: pred.tick,
            },
            StepTrace {
                prediction: pred.theta.clone(),
                residual,
                kalman_gain: gain,
                innovation_cov: s,
            },
        ))
    }

    /// Correction against calibrated absolute lengths:
    /// `e = z − f(θ_pred)`, `G = ∂f/∂θ(θ_pred)`.
    pub fn update_absolute(
        &self,
        pred: &Prediction,
        frame: &MeasurementFrame,
    ) -> Result<(EstimatorState, StepTrace), EstimatorError> {
        let z = frame
            .z_abs
            .as_ref()
            .ok_or(EstimatorError::MissingAbsolute)?;
        check_dim("z_abs", self.muscle_count(), z.len())?;
        check_finite("z_abs", z.iter())?;
        let residual = z - self.jmm.evaluate(pred.theta.as_slice())?;
        let g = self.jmm.jacobian(pred.theta.as_slice())?;
        self.correct(pred, &g, residual)
    }

    /// Correction from length changes only: with `δθ = θ_pred − θ_prev`,
    /// `e = δz − G(θ_prev)·δθ` and `H = ∂(G·δθ)/∂θ`. Absolute lengths are
    /// never read.
    pub fn update_relative(
        &self,
        pred: &Prediction,
        prev: &EstimatorState,
        frame: &MeasurementFrame,
    ) -> Result<(EstimatorState, StepTrace), EstimatorError> {
        self.check_state(prev)?;
        check_dim("delta_z", self.muscle_count(), frame.delta_z.len())?;
        check_finite("delta_z", frame.delta_z.iter())?;
        let dtheta = &pred.theta - &prev.theta;
        let g_prev = self.jmm.jacobian(prev.theta.as_slice())?;
        let residual = &frame.delta_z - &g_prev * &dtheta;
        let at = match self.config.linearization {
            RelativeLinearization::Predicted => &pred.theta,
            RelativeLinearization::Previous => &prev.theta,
        };
        let h = self
            .jmm
            .jacobian_directional_derivative(at.as_slice(), dtheta.as_slice())?;
        self.correct(pred, &h, residual)
    }

    /// Predict followed by the update selected by the configured mode.
    pub fn step(
        &self,
        state: &EstimatorState,
        frame: &MeasurementFrame,
    ) -> Result<(EstimatorState, StepTrace), EstimatorError> {
        let pred = self.predict(state, frame)?;
        match self.config.mode {
            Mode::Absolute => self.update_absolute(&pred, frame),
            Mode::Relative => self.update_relative(&pred, state, frame),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jmm::{MonomialBasis, Normalization};

    fn group(est: &[&str], bor: &[&str], muscles: &[&str]) -> GroupSpec {
        GroupSpec {
            name: "g".into(),
            estimated_joints: est.iter().map(|s| s.to_string()).collect(),
            borrowed_joints: bor.iter().map(|s| s.to_string()).collect(),
            muscles: muscles.iter().map(|s| s.to_string()).collect(),
            jmm: "g.json".into(),
        }
    }

    /// Degree-1 mapping `l = A θ` (identity normalization).
    fn linear(spec: &GroupSpec, a: &[f64]) -> PolynomialJmm {
        let d = spec.dof();
        let m = spec.muscles.len();
        let basis = MonomialBasis::enumerate(d, 1).unwrap();
        let mut c = DMatrix::zeros(m, d + 1);
        for i in 0..m {
            for j in 0..d {
                c[(i, j + 1)] = a[i * d + j];
            }
        }
        PolynomialJmm::new(
            basis,
            c,
            spec.muscles.clone(),
            spec.joint_order(),
            vec![Normalization::identity(); d],
        )
        .unwrap()
    }

    fn state(theta: &[f64], p: f64) -> EstimatorState {
        EstimatorState {
            theta: DVector::from_column_slice(theta),
            covariance: DMatrix::identity(theta.len(), theta.len()) * p,
            tick: 0,
        }
    }

    #[test]
    fn null_update_keeps_angles_and_adds_process_noise() {
        let spec = group(&["a", "b"], &[], &["m1", "m2"]);
        let jmm = linear(&spec, &[1.0, 0.2, -0.3, 1.0]);
        let config = EkfConfig::default();
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.1, -0.2], 0.01);
        let pred = f
            .predict(&s, &MeasurementFrame::relative(DVector::zeros(2)))
            .unwrap();
        assert_eq!(pred.theta, s.theta);
        let expected = &s.covariance + DMatrix::identity(2, 2) * config.process_noise_q;
        assert_eq!(pred.covariance, expected);
    }

    #[test]
    fn identity_jacobian_integrates_length_changes() {
        let spec = group(&["a", "b"], &[], &["m1", "m2"]);
        let jmm = linear(&spec, &[1.0, 0.0, 0.0, 1.0]);
        let config = EkfConfig::default();
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.0, 0.0], 0.01);
        let dz = DVector::from_vec(vec![0.01, -0.02]);
        let pred = f.predict(&s, &MeasurementFrame::relative(dz)).unwrap();
        assert!((pred.theta[0] - 0.01).abs() < 1e-15);
        assert!((pred.theta[1] + 0.02).abs() < 1e-15);
    }

    #[test]
    fn borrowed_slots_are_masked() {
        let spec = group(&["a", "b"], &["c"], &["m1", "m2", "m3"]);
        let jmm = linear(&spec, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let config = EkfConfig::default();
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.1, 0.2, 0.3], 0.01);
        let dz = DVector::from_vec(vec![0.01, 0.02, 0.03]);
        let pred = f.predict(&s, &MeasurementFrame::relative(dz)).unwrap();
        assert!((pred.theta[0] - 0.11).abs() < 1e-15);
        assert!((pred.theta[1] - 0.22).abs() < 1e-15);
        assert_eq!(pred.theta[2], 0.3);
    }

    #[test]
    fn zero_residual_leaves_estimate_and_shrinks_covariance() {
        let spec = group(&["a", "b"], &[], &["m1", "m2", "m3"]);
        let jmm = linear(&spec, &[1.0, 0.2, -0.3, 1.0, 0.5, 0.5]);
        let config = EkfConfig::default();
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.1, -0.2], 0.01);
        let dz = DVector::zeros(3);
        let pred = f
            .predict(&s, &MeasurementFrame::relative(dz.clone()))
            .unwrap();
        let z = jmm.evaluate(pred.theta.as_slice()).unwrap();
        let (post, trace) = f
            .update_absolute(&pred, &MeasurementFrame::absolute(dz, z))
            .unwrap();
        assert_eq!(post.theta, pred.theta);
        assert!(trace.residual.iter().all(|&e| e == 0.0));
        assert!(post.covariance.trace() <= pred.covariance.trace());
    }

    #[test]
    fn scalar_observable_limit_converges_to_measurement() {
        let spec = group(&["a"], &[], &["m"]);
        let jmm = linear(&spec, &[1.0]);
        let config = EkfConfig {
            process_noise_q: 1e-12,
            observation_noise_r: 1e-14,
            max_innovation_condition: 1e12,
            ..EkfConfig::default()
        };
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.0], 1.0);
        let frame = MeasurementFrame::absolute(DVector::zeros(1), DVector::from_vec(vec![0.37]));
        let pred = f.predict(&s, &frame).unwrap();
        let (post, _) = f.update_absolute(&pred, &frame).unwrap();
        assert!((post.theta[0] - 0.37).abs() < 1e-9);
    }

    #[test]
    fn relative_mode_stationary_and_linear_cases() {
        let spec = group(&["a", "b"], &[], &["m1", "m2", "m3"]);
        let jmm = linear(&spec, &[1.0, 0.2, -0.3, 1.0, 0.5, 0.5]);
        let config = EkfConfig::default().with_mode(Mode::Relative);
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.1, -0.2], 0.01);

        let still = MeasurementFrame::relative(DVector::zeros(3));
        let (post, trace) = f.step(&s, &still).unwrap();
        assert_eq!(post.theta, s.theta);
        assert!(trace.residual.iter().all(|&e| e == 0.0));

        // a linear mapping has H = 0, so the correction is a no-op
        let moving = MeasurementFrame::relative(DVector::from_vec(vec![0.01, 0.03, -0.02]));
        let pred = f.predict(&s, &moving).unwrap();
        let (post, trace) = f.update_relative(&pred, &s, &moving).unwrap();
        assert_eq!(post.theta, pred.theta);
        assert!(trace.kalman_gain.iter().all(|&k| k == 0.0));
    }

    #[test]
    fn relative_mode_ignores_absolute_lengths() {
        let spec = group(&["a"], &[], &["m1", "m2"]);
        let basis = MonomialBasis::enumerate(1, 2).unwrap();
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 0.05, 0.02, 0.0, -0.04, 0.03]);
        let jmm = PolynomialJmm::new(
            basis,
            c,
            spec.muscles.clone(),
            spec.joint_order(),
            vec![Normalization::identity()],
        )
        .unwrap();
        let config = EkfConfig::default().with_mode(Mode::Relative);
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.2], 0.01);
        let dz = DVector::from_vec(vec![0.001, -0.0007]);
        let a = f
            .step(
                &s,
                &MeasurementFrame::absolute(dz.clone(), DVector::from_vec(vec![0.1, 0.2])),
            )
            .unwrap();
        let b = f
            .step(
                &s,
                &MeasurementFrame::absolute(dz.clone(), DVector::from_vec(vec![5.1, 5.2])),
            )
            .unwrap();
        let c = f.step(&s, &MeasurementFrame::relative(dz)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn errors_for_bad_inputs() {
        let spec = group(&["a"], &[], &["m"]);
        let jmm = linear(&spec, &[1.0]);
        let config = EkfConfig::default();
        let f = GroupFilter::new(&spec, &jmm, &config).unwrap();
        let s = state(&[0.0], 0.01);
        assert!(matches!(
            f.predict(&s, &MeasurementFrame::relative(DVector::zeros(2))),
            Err(EstimatorError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            f.predict(
                &s,
                &MeasurementFrame::relative(DVector::from_vec(vec![f64::NAN]))
            ),
            Err(EstimatorError::NonFinite(_))
        ));
        let pred = f
            .predict(&s, &MeasurementFrame::relative(DVector::zeros(1)))
            .unwrap();
        assert_eq!(
            f.update_absolute(&pred, &MeasurementFrame::relative(DVector::zeros(1))),
            Err(EstimatorError::MissingAbsolute)
        );

        let tight = EkfConfig {
            observation_noise_r: 1e-30,
            initial_covariance_p0: 1.0,
            ..EkfConfig::default()
        };
        let spec2 = group(&["a", "b"], &[], &["m1", "m2"]);
        // two identical rows make S rank one up to R
        let jmm2 = linear(&spec2, &[1.0, 1.0, 1.0, 1.0]);
        let f2 = GroupFilter::new(&spec2, &jmm2, &tight).unwrap();
        let s2 = f2.initial_state(DVector::zeros(2)).unwrap();
        let frame = MeasurementFrame::absolute(DVector::zeros(2), DVector::zeros(2));
        let pred = f2.predict(&s2, &frame).unwrap();
        assert!(matches!(
            f2.update_absolute(&pred, &frame),
            Err(EstimatorError::SingularInnovation { .. })
        ));

        let wrong = group(&["b"], &[], &["m"]);
        assert!(matches!(
            GroupFilter::new(&wrong, &jmm, &config),
            Err(EstimatorError::JmmMismatch(_))
        ));
    }
}
