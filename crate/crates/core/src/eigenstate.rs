//! Eigenstate structure in the basis of noninteracting register states.
//!
//! The `J = 0` Hamiltonian is diagonal in the computational basis, so the
//! weights of an eigenvector are simply its squared components.

use std::io::Write;
use std::ops::Range;

use crate::eigen::EigenDecomposition;
use crate::error::{Error, Result};

/// Default cut below which profile weights are dropped.
pub const DEFAULT_PROFILE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn entropy(&self) -> f64 {
        entropy_sq(&self.weights)
    }
}

pub fn weights(eigenvector: &[f64]) -> WeightVector {
    WeightVector {
        weights: eigenvector.iter().map(|c| c * c).collect(),
    }
}

/// Base-2 Shannon entropy, with `0 · log2 0 = 0`.
pub fn entropy_sq(weights: &[f64]) -> f64 {
    shannon_bits(weights.iter().copied())
}

/// Entropy straight from eigenvector components.
pub fn eigenvector_entropy(eigenvector: &[f64]) -> f64 {
    shannon_bits(eigenvector.iter().map(|c| c * c))
}

fn shannon_bits(weights: impl Iterator<Item = f64>) -> f64 {
    // `0.0 - x` rather than `-x`, so a pure state gives +0 and not -0.
    0.0 - weights
        .filter(|&w| w > 0.0)
        .map(|w| w * w.log2())
        .sum::<f64>()
}

/// `(E_i, W_i)` pairs with `W_i > floor`, sorted by `E_i`.
pub fn eigenstate_profile(
    eigenvector: &[f64],
    diag_energies: &[f64],
    floor: f64,
) -> Result<Vec<(f64, f64)>> {
    if eigenvector.len() != diag_energies.len() {
        return Err(Error::DimensionMismatch {
            expected: diag_energies.len(),
            got: eigenvector.len(),
        });
    }
    let mut out: Vec<(f64, f64)> = eigenvector
        .iter()
        .zip(diag_energies)
        .map(|(c, &e)| (e, c * c))
        .filter(|&(_, w)| w > floor || (floor == 0.0 && w == 0.0))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn write_profile_csv<W: Write>(profile: &[(f64, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "e_i,w_i")?;
    for (e, w) in profile {
        writeln!(out, "{e},{w}")?;
    }
    Ok(())
}

/// Mean entropy of the eigenstates in `window` and its standard error over
/// those states.
pub fn mean_entropy(decomp: &EigenDecomposition, window: Range<usize>) -> Result<(f64, f64)> {
    if window.is_empty() {
        return Err(Error::EmptySample);
    }
    if window.end > decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            got: window.end,
        });
    }
    let values: Vec<f64> = window
        .map(|k| eigenvector_entropy(decomp.eigenvector(k)))
        .collect();
    Ok(mean_and_sem(&values))
}

/// Sample mean and standard error of the mean; the error is zero for a
/// single value.
pub(crate) fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::diagonalize_matrix;
    use faer::Mat;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        let w = weights(&[0.0, 1.0, 0.0]);
        assert_eq!(w.weights, vec![0.0, 1.0, 0.0]);
        assert_eq!(w.entropy(), 0.0);
        assert!(w.entropy().is_sign_positive());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let w = weights(&[h, h, 0.0, 0.0]);
        assert!((w.weights[0] - 0.5).abs() < 1e-15);
        assert!((w.entropy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_sector_entropy() {
        let dim = 2048;
        let w = vec![1.0 / dim as f64; dim];
        assert!((entropy_sq(&w) - 11.0).abs() < 1e-9);
    }

    #[test]
    fn profile_floor() {
        let v = [0.6, 0.0, 0.8];
        let e = [2.0, -1.0, 0.5];
        let p = eigenstate_profile(&v, &e, DEFAULT_PROFILE_FLOOR).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].0, 0.5);
        assert!((p[0].1 - 0.64).abs() < 1e-12);
        assert_eq!(eigenstate_profile(&v, &e, 0.0).unwrap().len(), 3);
        assert!(eigenstate_profile(&v, &e[..2], 0.0).is_err());

        let mut buf = Vec::new();
        write_profile_csv(&p, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("e_i,w_i\n0.5,"));
    }

    #[test]
    fn diagonal_hamiltonian_has_zero_entropy() {
        let diag = [1.5, -0.5, 0.25, 3.0, -2.0];
        let m = Mat::from_fn(5, 5, |i, j| if i == j { diag[i] } else { 0.0 });
        let d = diagonalize_matrix(m.as_ref(), None).unwrap();
        let (mean, sem) = mean_entropy(&d, 0..5).unwrap();
        assert_eq!(mean, 0.0);
        assert!(mean.is_sign_positive());
        assert_eq!(sem, 0.0);
        let (_, sem) = mean_entropy(&d, 2..3).unwrap();
        assert_eq!(sem, 0.0);
        assert!(mean_entropy(&d, 2..2).is_err());
    }

    fn random_weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..64).prop_filter_map("nonzero", |raw| {
            let total: f64 = raw.iter().sum();
            (total > 1e-6).then(|| raw.iter().map(|x| x / total).collect())
        })
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant(w in random_weights(), seed in any::<u64>()) {
            let mut shuffled = w.clone();
            let len = shuffled.len();
            let mut state = seed;
            for i in (1..len).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            prop_assert!((entropy_sq(&w) - entropy_sq(&shuffled)).abs() < 1e-12);
        }

        #[test]
        fn merging_never_raises_entropy(w in random_weights()) {
            let merged: Vec<f64> = w.chunks(2).map(|c| c.iter().sum()).collect();
            prop_assert!(entropy_sq(&merged) <= entropy_sq(&w) + 1e-12);
            prop_assert!(entropy_sq(&w) <= (w.len() as f64).log2() + 1e-12);
        }
    }
}
