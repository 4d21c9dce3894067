//! Least-squares fitting of polynomial joint-muscle mappings from a stream
//! of samples via normal-equation accumulation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::exec::ExecPolicy;
use crate::model::KinematicModel;

use super::{DatasetSpec, GridSampler, JmmError, MonomialBasis, Normalization, PolynomialJmm};

/// Tikhonov regularization added to the Gram matrix before solving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Ridge {
    /// `λ` used as is.
    Absolute(f64),
    /// `λ = value · trace(Gram)`.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-10)
    }
}

impl Ridge {
    pub const NONE: Ridge = Ridge::Absolute(0.0);

    fn lambda(&self, trace: f64) -> f64 {
        match *self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(v) => v * trace,
        }
    }

    fn is_valid(&self) -> bool {
        let v = match *self {
            Ridge::Absolute(v) | Ridge::Relative(v) => v,
        };
        v.is_finite() && v >= 0.0
    }
}

// eigenvalue ratio below which an unregularized Gram matrix counts as singular
const RANK_TOLERANCE: f64 = 1e-13;

/// Sufficient statistics of the regression: `Σ φφᵀ`, `Σ φ lᵀ` and `Σ l²`.
#[derive(Debug, Clone)]
pub struct FitAccumulator<'b> {
    basis: &'b MonomialBasis,
    normalization: Vec<Normalization>,
    muscle_count: usize,
    // upper triangle of the B × B Gram matrix, row-major
    gram: Vec<f64>,
    // B × M, row-major
    cross: Vec<f64>,
    sum_sq: Vec<f64>,
    count: u64,
    phi: Vec<f64>,
    x: Vec<f64>,
}

impl<'b> FitAccumulator<'b> {
    pub fn new(
        basis: &'b MonomialBasis,
        normalization: Vec<Normalization>,
        muscle_count: usize,
    ) -> Result<Self, JmmError> {
        if normalization.len() != basis.dof_count() {
            return Err(JmmError::LengthMismatch {
                expected: basis.dof_count(),
                actual: normalization.len(),
            });
        }
        let b = basis.len();
        Ok(Self {
            basis,
            normalization,
            muscle_count,
            gram: vec![0.0; b * b],
            cross: vec![0.0; b * muscle_count],
            sum_sq: vec![0.0; muscle_count],
            count: 0,
            phi: vec![0.0; b],
            x: vec![0.0; basis.dof_count()],
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, theta: &[f64], lengths: &[f64]) -> Result<(), JmmError> {
        if theta.len() != self.x.len() {
            return Err(JmmError::LengthMismatch {
                expected: self.x.len(),
                actual: theta.len(),
            });
        }
        if lengths.len() != self.muscle_count {
            return Err(JmmError::LengthMismatch {
                expected: self.muscle_count,
                actual: lengths.len(),
            });
        }
        if theta.iter().chain(lengths).any(|v| !v.is_finite()) {
            return Err(JmmError::NonFinite);
        }
        for ((x, &t), n) in self.x.iter_mut().zip(theta).zip(&self.normalization) {
            *x = n.apply(t);
        }
        self.basis.evaluate_into(&self.x, &mut self.phi);
        let b = self.phi.len();
        let m = self.muscle_count;
        for i in 0..b {
            let pi = self.phi[i];
            if pi == 0.0 {
                continue;
            }
            let row = &mut self.gram[i * b..(i + 1) * b];
            for (g, &pj) in row[i..].iter_mut().zip(&self.phi[i..]) {
                *g += pi * pj;
            }
            let cross = &mut self.cross[i * m..(i + 1) * m];
            for (c, &l) in cross.iter_mut().zip(lengths) {
                *c += pi * l;
            }
        }
        for (s, &l) in self.sum_sq.iter_mut().zip(lengths) {
            *s += l * l;
        }
        self.count += 1;
        Ok(())
    }

    /// Adds another accumulator's statistics into this one.
    pub fn merge(&mut self, other: &FitAccumulator<'_>) -> Result<(), JmmError> {
        if other.gram.len() != self.gram.len() || other.muscle_count != self.muscle_count {
            return Err(JmmError::LengthMismatch {
                expected: self.gram.len(),
                actual: other.gram.len(),
            });
        }
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    /// Solves the regularized normal equations for the coefficient matrix.
    pub fn solve(
        &self,
        ridge: Ridge,
        muscle_names: Vec<String>,
        joint_names: Vec<String>,
    ) -> Result<FitOutcome, JmmError> {
        if !ridge.is_valid() {
            return Err(JmmError::InvalidArgument(
                "ridge must be finite and non-negative".into(),
            ));
        }
        let b = self.basis.len();
        let m = self.muscle_count;
        if self.count < b as u64 {
            return Err(JmmError::InsufficientSamples {
                samples: self.count,
                basis: b,
            });
        }
        let mut gram = DMatrix::from_fn(b, b, |i, j| {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            self.gram[r * b + c]
        });
        let trace = gram.trace();
        let lambda = ridge.lambda(trace);
        for i in 0..b {
            gram[(i, i)] += lambda;
        }
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(min > max * RANK_TOLERANCE) {
            return Err(JmmError::RankDeficient { condition });
        }
        let cross = DMatrix::from_row_slice(b, m, &self.cross);
        let coefficients_t = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&cross),
            None => {
                let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
                &eig.eigenvectors * inv * eig.eigenvectors.transpose() * &cross
            }
        };
        let coefficients = coefficients_t.transpose();

        // Σ‖l − Cφ‖² = Σl² − 2 tr(C Y) + tr(C A Cᵀ) per muscle, with the unregularized A
        let mut rms = Vec::with_capacity(m);
        for i in 0..m {
            let c = coefficients.row(i).transpose();
            let mut gram_term = 0.0;
            for r in 0..b {
                for s in 0..b {
                    let (p, q) = if r <= s { (r, s) } else { (s, r) };
                    gram_term += c[r] * self.gram[p * b + q] * c[s];
                }
            }
            let cross_term: f64 = (0..b).map(|r| c[r] * self.cross[r * m + i]).sum();
            let sse = (self.sum_sq[i] - 2.0 * cross_term + gram_term).max(0.0);
            rms.push((sse / self.count as f64).sqrt());
        }

        let jmm = PolynomialJmm::new(
            self.basis.clone(),
            coefficients,
            muscle_names,
            joint_names,
            self.normalization.clone(),
        )?;
        Ok(FitOutcome {
            jmm,
            samples: self.count,
            condition,
            lambda,
            training_rms: rms,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub jmm: PolynomialJmm,
    pub samples: u64,
    /// Eigenvalue ratio of the (regularized) Gram matrix.
    pub condition: f64,
    pub lambda: f64,
    /// Per-muscle root-mean-square residual over the training stream.
    pub training_rms: Vec<f64>,
}

/// Fits a mapping from an arbitrary stream of `(theta, lengths)` pairs.
pub fn fit<I, T, L>(
    samples: I,
    basis: &MonomialBasis,
    normalization: Vec<Normalization>,
    muscle_names: Vec<String>,
    joint_names: Vec<String>,
    ridge: Ridge,
) -> Result<FitOutcome, JmmError>
where
    I: IntoIterator<Item = Result<(T, L), JmmError>>,
    T: AsRef<[f64]>,
    L: AsRef<[f64]>,
{
    let mut acc = FitAccumulator::new(basis, normalization, muscle_names.len())?;
    for sample in samples {
        let (theta, lengths) = sample?;
        acc.push(theta.as_ref(), lengths.as_ref())?;
    }
    acc.solve(ridge, muscle_names, joint_names)
}

/// Samples the model on `spec` over the given joint and muscle subsets and
/// fits a degree-`degree` mapping.
///
/// The grid is split by leading grid index; each slice is accumulated
/// independently (in parallel under [`ExecPolicy::Parallel`]) and the slices
/// are summed in index order, so the result is bit-identical for every policy
/// and thread count.
pub fn fit_grid(
    model: &KinematicModel,
    spec: &DatasetSpec,
    joints: &[usize],
    muscles: &[usize],
    degree: usize,
    ridge: Ridge,
    exec: ExecPolicy,
) -> Result<FitOutcome, JmmError> {
    let basis = MonomialBasis::enumerate(joints.len(), degree)?;
    let sampler = GridSampler::new(model, spec, joints, muscles)?;
    let normalization: Vec<Normalization> = spec
        .ranges()
        .iter()
        .map(|&(lo, hi)| Normalization::from_range(lo, hi))
        .collect();

    let chunks = exec.map_indexed(spec.per_joint_samples()[0], |leading| {
        let mut acc = FitAccumulator::new(&basis, normalization.clone(), muscles.len())?;
        for sample in sampler.samples_with_leading(leading) {
            let sample = sample?;
            acc.push(&sample.theta, &sample.lengths)?;
        }
        Ok::<_, JmmError>(acc)
    });

    let mut total = FitAccumulator::new(&basis, normalization.clone(), muscles.len())?;
    for chunk in chunks {
        total.merge(&chunk?)?;
    }
    let muscle_names = muscles
        .iter()
        .map(|&m| model.muscles()[m].name.clone())
        .collect();
    let joint_names = joints
        .iter()
        .map(|&j| model.joints()[j].name.clone())
        .collect();
    total.solve(ridge, muscle_names, joint_names)
}
