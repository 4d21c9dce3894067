use super::JmmError;

/// Default cap on the number of monomials a basis may hold.
pub const DEFAULT_BASIS_LIMIT: usize = 1_000_000;

/// `n choose k`, or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(acc)
}

/// Number of monomials of total degree at most `degree` in `dof` variables,
/// i.e. the multiset coefficient C(dof + degree, degree).
pub fn basis_size(dof: usize, degree: usize) -> Option<u128> {
    binomial((dof + degree) as u64, degree as u64)
}

/// All exponent vectors with total degree ≤ `degree`, in graded
/// lexicographic order: by total degree, then with larger leading exponents
/// first. The first entry is the constant monomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    dof_count: usize,
    degree: usize,
    exponents: Vec<u8>,
}

impl MonomialBasis {
    pub fn enumerate(dof_count: usize, degree: usize) -> Result<Self, JmmError> {
        Self::enumerate_with_limit(dof_count, degree, DEFAULT_BASIS_LIMIT)
    }

    pub fn enumerate_with_limit(
        dof_count: usize,
        degree: usize,
        limit: usize,
    ) -> Result<Self, JmmError> {
        if dof_count == 0 {
            return Err(JmmError::InvalidArgument(
                "basis needs at least one variable".into(),
            ));
        }
        if degree > u8::MAX as usize {
            return Err(JmmError::InvalidArgument(format!(
                "degree {degree} is too large"
            )));
        }
        let count = basis_size(dof_count, degree).unwrap_or(u128::MAX);
        if count > limit as u128 {
            return Err(JmmError::CapacityExceeded { count, limit });
        }
        let mut exponents = Vec::with_capacity(count as usize * dof_count);
        let mut current = vec![0u8; dof_count];
        for total in 0..=degree {
            compositions(total, 0, &mut current, &mut exponents);
        }
        debug_assert_eq!(exponents.len(), count as usize * dof_count);
        Ok(Self {
            dof_count,
            degree,
            exponents,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len() / self.dof_count
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, index: usize) -> &[u8] {
        &self.exponents[index * self.dof_count..(index + 1) * self.dof_count]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.exponents.chunks_exact(self.dof_count)
    }

    /// Table of `x[j]^k` for `k = 0..=degree`, row-major by variable.
    pub(crate) fn power_table(&self, x: &[f64]) -> Vec<f64> {
        let stride = self.degree + 1;
        let mut table = vec![1.0; self.dof_count * stride];
        for (j, &xj) in x.iter().enumerate() {
            for k in 1..stride {
                table[j * stride + k] = table[j * stride + k - 1] * xj;
            }
        }
        table
    }

    /// Evaluates every monomial at `x` into `out`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dof_count);
        debug_assert_eq!(out.len(), self.len());
        let stride = self.degree + 1;
        let table = self.power_table(x);
        for (value, exps) in out.iter_mut().zip(self.iter()) {
            *value = exps
                .iter()
                .enumerate()
                .map(|(j, &e)| table[j * stride + e as usize])
                .product();
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(x, &mut out);
        out
    }
}

fn compositions(remaining: usize, position: usize, current: &mut [u8], out: &mut Vec<u8>) {
    if position + 1 == current.len() {
        current[position] = remaining as u8;
        out.extend_from_slice(current);
        return;
    }
    for e in (0..=remaining).rev() {
        current[position] = e as u8;
        compositions(remaining - e, position + 1, current, out);
    }
    current[position] = 0;
}
