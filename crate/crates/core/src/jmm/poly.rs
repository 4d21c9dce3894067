use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{JmmError, MonomialBasis};

/// Affine map of one DOF onto `[-1, 1]`: `x = (theta - center) / half_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: f64,
    pub half_range: f64,
}

impl Normalization {
    pub fn from_range(lo: f64, hi: f64) -> Self {
        Self {
            center: 0.5 * (lo + hi),
            half_range: 0.5 * (hi - lo),
        }
    }

    pub fn identity() -> Self {
        Self {
            center: 0.0,
            half_range: 1.0,
        }
    }

    #[inline]
    pub fn apply(&self, theta: f64) -> f64 {
        (theta - self.center) / self.half_range
    }
}

/// Joint-muscle mapping `l = C · φ(x)`, one polynomial row per muscle, where
/// `x` is the normalized joint-angle vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialJmm {
    basis: MonomialBasis,
    coefficients: DMatrix<f64>,
    muscle_names: Vec<String>,
    joint_names: Vec<String>,
    normalization: Vec<Normalization>,
}

// falling factorial e·(e-1)···(e-order+1) times x^(e-order)
#[inline]
fn derivative_power(row: &[f64], e: u8, order: u8) -> f64 {
    if order > e {
        return 0.0;
    }
    let mut factor = 1.0;
    for i in 0..order {
        factor *= f64::from(e - i);
    }
    factor * row[(e - order) as usize]
}

impl PolynomialJmm {
    pub fn new(
        basis: MonomialBasis,
        coefficients: DMatrix<f64>,
        muscle_names: Vec<String>,
        joint_names: Vec<String>,
        normalization: Vec<Normalization>,
    ) -> Result<Self, JmmError> {
        if coefficients.ncols() != basis.len() {
            return Err(JmmError::LengthMismatch {
                expected: basis.len(),
                actual: coefficients.ncols(),
            });
        }
        if coefficients.nrows() != muscle_names.len() {
            return Err(JmmError::LengthMismatch {
                expected: muscle_names.len(),
                actual: coefficients.nrows(),
            });
        }
        if joint_names.len() != basis.dof_count() || normalization.len() != basis.dof_count() {
            return Err(JmmError::LengthMismatch {
                expected: basis.dof_count(),
                actual: joint_names.len().max(normalization.len()),
            });
        }
        if normalization
            .iter()
            .any(|n| !n.center.is_finite() || !(n.half_range > 0.0) || !n.half_range.is_finite())
        {
            return Err(JmmError::InvalidArgument(
                "normalization needs finite centers and positive half-ranges".into(),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(JmmError::NonFinite);
        }
        Ok(Self {
            basis,
            coefficients,
            muscle_names,
            joint_names,
            normalization,
        })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// M × B coefficient matrix.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn muscle_names(&self) -> &[String] {
        &self.muscle_names
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn normalization(&self) -> &[Normalization] {
        &self.normalization
    }

    pub fn dof(&self) -> usize {
        self.basis.dof_count()
    }

    pub fn muscle_count(&self) -> usize {
        self.muscle_names.len()
    }

    fn check_len(&self, theta: &[f64]) -> Result<(), JmmError> {
        if theta.len() != self.dof() {
            return Err(JmmError::LengthMismatch {
                expected: self.dof(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.normalization)
            .map(|(&t, n)| n.apply(t))
            .collect()
    }

    /// True when `theta` lies outside the fitted domain, where the polynomial
    /// extrapolates.
    pub fn extrapolates(&self, theta: &[f64]) -> bool {
        self.normalize(theta).iter().any(|x| x.abs() > 1.0 + 1e-12)
    }

    /// Calibrated muscle lengths at `theta`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<DVector<f64>, JmmError> {
        self.check_len(theta)?;
        let phi = DVector::from_vec(self.basis.evaluate(&self.normalize(theta)));
        Ok(&self.coefficients * phi)
    }

    /// Analytic muscle Jacobian ∂f/∂θ (M × D), meters per radian.
    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>, JmmError> {
        self.check_len(theta)?;
        let d = self.dof();
        let stride = self.basis.degree() + 1;
        let table = self.basis.power_table(&self.normalize(theta));
        let row = |j: usize| &table[j * stride..(j + 1) * stride];

        // dphi[b, j] = ∂φ_b/∂x_j
        let mut dphi = DMatrix::zeros(self.basis.len(), d);
        for (b, exps) in self.basis.iter().enumerate() {
            for j in 0..d {
                if exps[j] == 0 {
                    continue;
                }
                let mut v = 1.0;
                for (k, &e) in exps.iter().enumerate() {
                    v *= derivative_power(row(k), e, u8::from(k == j));
                }
                dphi[(b, j)] = v;
            }
        }
        let mut g = &self.coefficients * dphi;
        for (j, n) in self.normalization.iter().enumerate() {
            g.column_mut(j).unscale_mut(n.half_range);
        }
        Ok(g)
    }

    /// Directional derivative of the Jacobian along `dtheta`:
    /// `H[i, j] = Σ_k ∂²f_i/∂θ_j∂θ_k · dtheta_k`.
    pub fn jacobian_directional_derivative(
        &self,
        theta: &[f64],
        dtheta: &[f64],
    ) -> Result<DMatrix<f64>, JmmError> {
        self.check_len(theta)?;
        self.check_len(dtheta)?;
        let d = self.dof();
        let stride = self.basis.degree() + 1;
        let table = self.basis.power_table(&self.normalize(theta));
        let row = |j: usize| &table[j * stride..(j + 1) * stride];
        let dx: Vec<f64> = dtheta
            .iter()
            .zip(&self.normalization)
            .map(|(&t, n)| t / n.half_range)
            .collect();

        let mut orders = vec![0u8; d];
        let mut hphi = DMatrix::zeros(self.basis.len(), d);
        for (b, exps) in self.basis.iter().enumerate() {
            if exps.iter().map(|&e| u32::from(e)).sum::<u32>() < 2 {
                continue;
            }
            for j in 0..d {
                if exps[j] == 0 {
                    continue;
                }
                let mut acc = 0.0;
                for k in 0..d {
                    if dx[k] == 0.0 || exps[k] == 0 || (k == j && exps[j] < 2) {
                        continue;
                    }
                    orders.iter_mut().for_each(|o| *o = 0);
                    orders[j] += 1;
                    orders[k] += 1;
                    let mut v = 1.0;
                    for (m, &e) in exps.iter().enumerate() {
                        v *= derivative_power(row(m), e, orders[m]);
                    }
                    acc += v * dx[k];
                }
                hphi[(b, j)] = acc;
            }
        }
        let mut h = &self.coefficients * hphi;
        for (j, n) in self.normalization.iter().enumerate() {
            h.column_mut(j).unscale_mut(n.half_range);
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(
        dof: usize,
        degree: usize,
        coeffs: Vec<f64>,
        norm: Vec<Normalization>,
    ) -> PolynomialJmm {
        let basis = MonomialBasis::enumerate(dof, degree).unwrap();
        let b = basis.len();
        PolynomialJmm::new(
            basis,
            DMatrix::from_row_slice(1, b, &coeffs),
            vec!["m".into()],
            (0..dof).map(|j| format!("j{j}")).collect(),
            norm,
        )
        .unwrap()
    }

    #[test]
    fn constant_term_has_zero_jacobian() {
        let jmm = single(
            2,
            2,
            vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![Normalization::identity(); 2],
        );
        assert_eq!(jmm.evaluate(&[0.4, -0.2]).unwrap()[0], 0.3);
        assert_eq!(jmm.jacobian(&[0.4, -0.2]).unwrap(), DMatrix::zeros(1, 2));
    }

    #[test]
    fn power_rule() {
        // l = θ² with identity normalization
        let jmm = single(1, 2, vec![0.0, 0.0, 1.0], vec![Normalization::identity()]);
        let g = jmm.jacobian(&[0.3]).unwrap();
        assert!((g[(0, 0)] - 0.6).abs() < 1e-15);
        let h = jmm.jacobian_directional_derivative(&[0.3], &[0.5]).unwrap();
        assert!((h[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bilinear_directional_derivative() {
        // l = θ₁θ₂
        let jmm = single(
            2,
            2,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            vec![Normalization::identity(); 2],
        );
        let h = jmm
            .jacobian_directional_derivative(&[0.7, -0.4], &[1.0, 0.0])
            .unwrap();
        assert_eq!(h, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }

    #[test]
    fn linear_mapping_has_vanishing_second_derivative() {
        let jmm = single(
            2,
            1,
            vec![0.1, 0.5, -0.2],
            vec![Normalization::from_range(-1.0, 2.0); 2],
        );
        let h = jmm
            .jacobian_directional_derivative(&[0.3, 0.1], &[0.4, 0.9])
            .unwrap();
        assert_eq!(h, DMatrix::zeros(1, 2));
    }

    #[test]
    fn normalization_chain_rule() {
        // l = x² with x = (θ - 1) / 2, so dl/dθ = (θ - 1) / 2
        let jmm = single(
            1,
            2,
            vec![0.0, 0.0, 1.0],
            vec![Normalization::from_range(-1.0, 3.0)],
        );
        let g = jmm.jacobian(&[2.0]).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(jmm.extrapolates(&[3.5]));
        assert!(!jmm.extrapolates(&[3.0]));
    }

    #[test]
    fn dimension_errors() {
        let jmm = single(1, 1, vec![0.0, 1.0], vec![Normalization::identity()]);
        assert!(matches!(
            jmm.evaluate(&[0.0, 1.0]),
            Err(JmmError::LengthMismatch { .. })
        ));
        assert!(jmm.jacobian_directional_derivative(&[0.0], &[]).is_err());
    }
}
