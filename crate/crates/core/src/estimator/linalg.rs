use nalgebra::{DMatrix, SymmetricEigen};

/// Moore–Penrose pseudo-inverse via SVD, dropping singular values below
/// `rel_tol · σ_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let max = svd.singular_values.max();
    let cutoff = max * rel_tol;
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Symmetric part `(P + Pᵀ) / 2`.
pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceHealth {
    /// Largest `|P_ij − P_ji|`.
    pub asymmetry: f64,
    /// Smallest eigenvalue of the symmetrized matrix.
    pub min_eigenvalue: f64,
}

impl CovarianceHealth {
    pub fn is_healthy(&self) -> bool {
        self.asymmetry <= 1e-12 && self.min_eigenvalue >= -1e-10
    }
}

pub fn covariance_health(p: &DMatrix<f64>) -> CovarianceHealth {
    let mut asymmetry: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            asymmetry = asymmetry.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    let mut sym = p.clone();
    symmetrize(&mut sym);
    let min_eigenvalue = if sym.is_empty() {
        0.0
    } else {
        SymmetricEigen::new(sym).eigenvalues.min()
    };
    CovarianceHealth {
        asymmetry,
        min_eigenvalue,
    }
}
