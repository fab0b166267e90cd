//! Full eigendecomposition of dense real-symmetric matrices.
//!
//! Backed by faer's blocked tridiagonalization and divide-and-conquer
//! solver, run sequentially so a decomposition never depends on how many
//! worker threads the caller has. [`validate`] checks the result against
//! the accuracy contract independently of the solver.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::{Mat, MatRef, Par};

use crate::basis::SectorHamiltonian;
use crate::error::{Error, Result};

/// Bound on `max |VᵀV − I|`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Relative bound on `max |HV − VΛ|`; scaled by `max(1, ‖H‖_max · dim)`.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Non-decreasing.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Mat<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        self.eigenvectors
            .col(k)
            .try_as_col_major()
            .expect("eigenvector columns are contiguous")
            .as_slice()
    }
}

pub fn diagonalize(h: &SectorHamiltonian) -> Result<EigenDecomposition> {
    diagonalize_matrix(h.matrix.as_ref(), Some(h.seed))
}

/// Decomposes a symmetric matrix, reading only its lower triangle.
/// `seed` is carried into the convergence error for diagnostics.
pub fn diagonalize_matrix(a: MatRef<'_, f64>, seed: Option<u64>) -> Result<EigenDecomposition> {
    let dim = check_input(a)?;
    let mut s = Diag::<f64>::zeros(dim);
    let mut u = Mat::<f64>::zeros(dim, dim);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(self_adjoint_evd_scratch::<f64>(
        dim,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    self_adjoint_evd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::Convergence { seed })?;
    let eigenvalues = s.column_vector().iter().copied().collect();
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: u,
    })
}

/// Eigenvalues only, non-decreasing.
pub fn eigenvalues(a: MatRef<'_, f64>, seed: Option<u64>) -> Result<Vec<f64>> {
    let dim = check_input(a)?;
    let mut s = Diag::<f64>::zeros(dim);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(self_adjoint_evd_scratch::<f64>(
        dim,
        ComputeEigenvectors::No,
        par,
        Default::default(),
    ));
    self_adjoint_evd(
        a,
        s.as_mut(),
        None,
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::Convergence { seed })?;
    Ok(s.column_vector().iter().copied().collect())
}

fn check_input(a: MatRef<'_, f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite);
            }
        }
    }
    Ok(a.nrows())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `max |VᵀV − I|`
    pub orthonormality: f64,
    /// `max |HV − VΛ|`
    pub eigen_residual: f64,
    pub orthonormality_tol: f64,
    pub residual_tol: f64,
}

impl ResidualReport {
    pub fn orthonormality_ok(&self) -> bool {
        self.orthonormality <= self.orthonormality_tol
    }

    pub fn residual_ok(&self) -> bool {
        self.eigen_residual <= self.residual_tol
    }

    pub fn ok(&self) -> bool {
        self.orthonormality_ok() && self.residual_ok()
    }
}

/// Measures how well `decomp` satisfies the eigen-equation for `h`.
pub fn validate(decomp: &EigenDecomposition, h: MatRef<'_, f64>) -> Result<ResidualReport> {
    let dim = decomp.dim();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.nrows(),
        });
    }
    if decomp.eigenvectors.nrows() != dim || decomp.eigenvectors.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: decomp.eigenvectors.ncols(),
        });
    }
    let v = decomp.eigenvectors.as_ref();
    let gram = v.transpose() * v;
    let hv = h * v;

    let mut orthonormality = 0.0f64;
    let mut eigen_residual = 0.0f64;
    let mut h_max = 0.0f64;
    for j in 0..dim {
        let lambda = decomp.eigenvalues[j];
        for i in 0..dim {
            let target = if i == j { 1.0 } else { 0.0 };
            orthonormality = orthonormality.max((gram[(i, j)] - target).abs());
            eigen_residual = eigen_residual.max((hv[(i, j)] - v[(i, j)] * lambda).abs());
            h_max = h_max.max(h[(i, j)].abs());
        }
    }
    Ok(ResidualReport {
        orthonormality,
        eigen_residual,
        orthonormality_tol: ORTHONORMALITY_TOL,
        residual_tol: RESIDUAL_TOL * (h_max * dim as f64).max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(dim: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::<f64>::zeros(dim, dim);
        for j in 0..dim {
            for i in j..dim {
                let x = rng.random::<f64>() * 2.0 - 1.0;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn two_by_two_closed_form() {
        let (a, c) = (1.7, 0.35);
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => a,
            (1, 1) => -a,
            _ => c,
        });
        let d = diagonalize_matrix(m.as_ref(), None).unwrap();
        let r = (a * a + c * c).sqrt();
        assert!((d.eigenvalues[0] + r).abs() < 1e-14);
        assert!((d.eigenvalues[1] - r).abs() < 1e-14);
    }

    #[test]
    fn diagonal_input() {
        let diag = [3.0, -1.0, 2.5, 0.0];
        let m = Mat::from_fn(4, 4, |i, j| if i == j { diag[i] } else { 0.0 });
        let d = diagonalize_matrix(m.as_ref(), None).unwrap();
        assert_eq!(d.eigenvalues, vec![-1.0, 0.0, 2.5, 3.0]);
        for k in 0..4 {
            let v = d.eigenvector(k);
            let ones = v.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-15).count();
            let zeros = v.iter().filter(|x| **x == 0.0).count();
            assert_eq!((ones, zeros), (1, 3));
        }
        let report = validate(&d, m.as_ref()).unwrap();
        assert_eq!(report.orthonormality, 0.0);
        assert_eq!(report.eigen_residual, 0.0);
        assert!(report.ok());
    }

    #[test]
    fn random_contract() {
        let m = random_symmetric(100, 3);
        let d = diagonalize_matrix(m.as_ref(), None).unwrap();
        assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let report = validate(&d, m.as_ref()).unwrap();
        assert!(report.ok(), "{report:?}");

        let trace: f64 = (0..100).map(|i| m[(i, i)]).sum();
        let sum: f64 = d.eigenvalues.iter().sum();
        assert!((trace - sum).abs() <= 1e-9 * 100.0);

        let values_only = eigenvalues(m.as_ref(), None).unwrap();
        for (a, b) in values_only.iter().zip(&d.eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn negation_reverses_spectrum() {
        let m = random_symmetric(60, 8);
        let neg = Mat::from_fn(60, 60, |i, j| -m[(i, j)]);
        let a = eigenvalues(m.as_ref(), None).unwrap();
        let b = eigenvalues(neg.as_ref(), None).unwrap();
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_eigenvector_is_flagged() {
        let m = random_symmetric(20, 1);
        let mut d = diagonalize_matrix(m.as_ref(), None).unwrap();
        d.eigenvectors.col_mut(5).fill(0.0);
        let report = validate(&d, m.as_ref()).unwrap();
        assert!(!report.orthonormality_ok());
        assert!(!report.ok());
    }

    #[test]
    fn bad_inputs() {
        let mut m = random_symmetric(5, 2);
        let d = diagonalize_matrix(m.as_ref(), None).unwrap();
        let other = random_symmetric(6, 2);
        assert!(matches!(
            validate(&d, other.as_ref()),
            Err(Error::DimensionMismatch { .. })
        ));
        m[(2, 1)] = f64::NAN;
        assert!(matches!(
            diagonalize_matrix(m.as_ref(), None),
            Err(Error::NonFinite)
        ));
    }
}
