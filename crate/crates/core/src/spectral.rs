//! Nearest-neighbour level-spacing statistics.
//!
//! Spacings are taken in a central energy window and measured in units of
//! the mean spacing of that window, one realization at a time. The
//! crossover parameter `η` compares the cumulative weight below `s0` with
//! the Poisson and Wigner-Dyson laws.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Crossing point of the Poisson and Wigner-Dyson spacing densities.
pub const S0: f64 = 0.4729;

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
pub const DEFAULT_S_MAX: f64 = 5.0;

/// A window whose mean spacing is below this fraction of the energy scale
/// counts as fully degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Poisson,
    WignerDyson,
}

impl Reference {
    pub fn density(self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeSpacing(s));
        }
        Ok(match self {
            Reference::Poisson => (-s).exp(),
            Reference::WignerDyson => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
        })
    }

    pub fn cdf(self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeSpacing(s));
        }
        Ok(match self {
            Reference::Poisson => -(-s).exp_m1(),
            Reference::WignerDyson => -(-0.25 * PI * s * s).exp_m1(),
        })
    }
}

/// Indices of the levels with `|E − E_c| ≤ fraction · (E_max − E_min)`,
/// `E_c` the band center. `eigenvalues` must be ascending.
pub fn select_window(eigenvalues: &[f64], fraction: f64) -> Result<Range<usize>> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidParameter {
            field: "window_fraction",
            reason: format!("{fraction} is outside (0, 0.5]"),
        });
    }
    let (Some(&lo), Some(&hi)) = (eigenvalues.first(), eigenvalues.last()) else {
        return Err(Error::InsufficientStatistics { found: 0 });
    };
    // Measured inward from the band edges so that fraction 0.5 keeps both
    // extremes exactly; `center ± half` can round past them.
    let inset = (0.5 - fraction) * (hi - lo);
    let start = eigenvalues.partition_point(|&e| e < lo + inset);
    let end = eigenvalues.partition_point(|&e| e <= hi - inset);
    if end - start < 3 {
        return Err(Error::InsufficientStatistics { found: end - start });
    }
    Ok(start..end)
}

/// Consecutive gaps divided by their mean.
pub fn normalized_spacings(levels: &[f64]) -> Result<Vec<f64>> {
    if levels.len() < 3 {
        return Err(Error::InsufficientStatistics {
            found: levels.len(),
        });
    }
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let scale = levels.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    if mean <= DEGENERACY_TOL * scale {
        return Err(Error::DegenerateWindow { mean_spacing: mean });
    }
    Ok(gaps.into_iter().map(|g| g / mean).collect())
}

/// Window selection followed by normalization.
pub fn window_spacings(eigenvalues: &[f64], fraction: f64) -> Result<Vec<f64>> {
    let window = select_window(eigenvalues, fraction)?;
    normalized_spacings(&eigenvalues[window])
}

/// Spacings pooled over an ensemble.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpacingSample {
    pub spacings: Vec<f64>,
    /// Realizations that contributed.
    pub n_d: usize,
}

impl SpacingSample {
    pub fn n_s(&self) -> usize {
        self.spacings.len()
    }

    pub fn push_realization(&mut self, spacings: &[f64]) {
        self.spacings.extend_from_slice(spacings);
        self.n_d += 1;
    }

    pub fn eta(&self) -> Result<f64> {
        eta(&self.spacings)
    }
}

/// `η` for a given cumulative weight below `s0`.
pub fn eta_from_cdf(cdf_at_s0: f64) -> f64 {
    let fp = Reference::Poisson.cdf(S0).unwrap();
    let fw = Reference::WignerDyson.cdf(S0).unwrap();
    (cdf_at_s0 - fw) / (fp - fw)
}

/// `η = (F̂(s0) − F_W(s0)) / (F_P(s0) − F_W(s0))` with `F̂` the empirical
/// fraction of spacings below `s0`.
pub fn eta(spacings: &[f64]) -> Result<f64> {
    if spacings.is_empty() {
        return Err(Error::EmptySample);
    }
    let below = spacings.iter().filter(|&&s| s < S0).count();
    Ok(eta_from_cdf(below as f64 / spacings.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Density per bin; integrates to one over `[0, bins · bin_width)`.
    pub densities: Vec<f64>,
    /// Spacings beyond the last bin.
    pub overflow: usize,
}

impl Histogram {
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)
    }

    /// CSV with `s_bin_left,s_bin_right,density,pp_density,pw_density`;
    /// reference densities are taken at the bin center.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s_bin_left,s_bin_right,density,pp_density,pw_density")?;
        for (k, density) in self.densities.iter().enumerate() {
            let (left, right) = self.bin_edges(k);
            let mid = 0.5 * (left + right);
            let pp = Reference::Poisson.density(mid).unwrap();
            let pw = Reference::WignerDyson.density(mid).unwrap();
            writeln!(out, "{left},{right},{density},{pp},{pw}")?;
        }
        Ok(())
    }
}

pub fn spacing_histogram(spacings: &[f64], bin_width: f64, s_max: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "bin_width",
            reason: format!("{bin_width} must be positive"),
        });
    }
    if !(s_max > 0.0) {
        return Err(Error::InvalidParameter {
            field: "s_max",
            reason: format!("{s_max} must be positive"),
        });
    }
    if spacings.is_empty() {
        return Err(Error::EmptySample);
    }
    let bins = ((s_max / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; bins];
    let mut overflow = 0;
    for &s in spacings {
        if s < 0.0 {
            return Err(Error::NegativeSpacing(s));
        }
        let k = (s / bin_width).floor() as usize;
        match counts.get_mut(k) {
            Some(c) => *c += 1,
            None => overflow += 1,
        }
    }
    let inside = spacings.len() - overflow;
    let densities = counts
        .iter()
        .map(|&c| {
            if inside == 0 {
                0.0
            } else {
                c as f64 / (inside as f64 * bin_width)
            }
        })
        .collect();
    Ok(Histogram {
        bin_width,
        counts,
        densities,
        overflow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s0_is_the_crossing() {
        let pp = Reference::Poisson.density(S0).unwrap();
        let pw = Reference::WignerDyson.density(S0).unwrap();
        assert!((pp - pw).abs() < 1e-3);
        assert!((pp - 0.6232).abs() < 1e-4, "{pp}");
        assert!((pw - 0.6232).abs() < 1e-3, "{pw}");
    }

    #[test]
    fn reference_cdfs() {
        assert_eq!(Reference::Poisson.cdf(0.0).unwrap(), 0.0);
        assert_eq!(Reference::WignerDyson.cdf(0.0).unwrap(), 0.0);
        assert!((Reference::Poisson.cdf(S0).unwrap() - 0.376_808).abs() < 1e-6);
        assert!((Reference::WignerDyson.cdf(S0).unwrap() - 0.16108).abs() < 1e-5);
        assert!(matches!(
            Reference::Poisson.cdf(-0.1),
            Err(Error::NegativeSpacing(_))
        ));
    }

    /// Trapezoid quadrature of the densities must reproduce the closed-form
    /// cumulative functions.
    #[test]
    fn cdf_matches_quadrature() {
        for which in [Reference::Poisson, Reference::WignerDyson] {
            for &s in &[0.1, S0, 1.0, 2.5] {
                let steps = 20_000;
                let h = s / steps as f64;
                let mut acc = 0.0;
                for k in 0..steps {
                    let a = which.density(k as f64 * h).unwrap();
                    let b = which.density((k + 1) as f64 * h).unwrap();
                    acc += 0.5 * h * (a + b);
                }
                assert!((acc - which.cdf(s).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eta_endpoints() {
        assert!((eta_from_cdf(0.37678) - 1.0).abs() < 1e-3);
        assert!(eta_from_cdf(0.16108).abs() < 1e-3);
        assert!(matches!(eta(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn window_selection() {
        let levels: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(select_window(&levels, 0.0625).unwrap(), 44..57);
        assert_eq!(select_window(&levels, 0.5).unwrap(), 0..101);
        assert!(matches!(
            select_window(&[0.0, 1.0], 0.0625),
            Err(Error::InsufficientStatistics { found: 0 })
        ));
        assert!(select_window(&levels, 0.0).is_err());
    }

    #[test]
    fn half_fraction_keeps_band_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..2000 {
            let mut levels: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 9.0 - 4.7).collect();
            levels.sort_by(f64::total_cmp);
            assert_eq!(select_window(&levels, 0.5).unwrap(), 0..8, "{levels:?}");
        }
    }

    #[test]
    fn spacing_normalization() {
        let s = normalized_spacings(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 1.0]);
        let s = normalized_spacings(&[0.0, 1.0, 4.0]).unwrap();
        assert_eq!(s, vec![0.5, 1.5]);
        let s = normalized_spacings(&[0.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(s.contains(&0.0));
        assert!(matches!(
            normalized_spacings(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn histogram_single_spacing() {
        let h = spacing_histogram(&[1.0], 0.1, 5.0).unwrap();
        assert_eq!(h.counts.len(), 50);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.bin_edges(10), (1.0, 1.1));
        assert!((h.densities[10] - 10.0).abs() < 1e-12);
        assert!(matches!(
            spacing_histogram(&[], 0.1, 5.0),
            Err(Error::EmptySample)
        ));
        assert!(spacing_histogram(&[1.0], 0.0, 5.0).is_err());
    }

    #[test]
    fn histogram_of_poisson_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let h = spacing_histogram(&draws, 0.1, 5.0).unwrap();
        let total = n as f64;
        for (k, &count) in h.counts.iter().enumerate() {
            let (a, b) = h.bin_edges(k);
            let p = (-a).exp() - (-b).exp();
            let sigma = (total * p * (1.0 - p)).sqrt();
            assert!(
                (count as f64 - total * p).abs() <= 3.0 * sigma,
                "bin {k}: {count} vs {}",
                total * p
            );
        }
        let area: f64 = h.densities.iter().sum::<f64>() * 0.1;
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_of_exponential_spacings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        assert!((eta(&draws).unwrap() - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn spacings_have_unit_mean(gaps in prop::collection::vec(0.01f64..10.0, 2..200)) {
            let mut levels = vec![0.0];
            for g in &gaps {
                levels.push(levels.last().unwrap() + g);
            }
            let s = normalized_spacings(&levels).unwrap();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn eta_ignores_common_scale(
            gaps in prop::collection::vec(0.001f64..5.0, 3..200),
            scale in 0.01f64..100.0,
        ) {
            let build = |factor: f64| {
                let mut levels = vec![0.0];
                for g in &gaps {
                    levels.push(levels.last().unwrap() + g * factor);
                }
                levels
            };
            let a = normalized_spacings(&build(1.0)).unwrap();
            let b = normalized_spacings(&build(scale)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            // Exact ties at s0 aside, the counts agree.
            let ea = eta(&a).unwrap();
            let eb = eta(&b).unwrap();
            let near_s0 = a.iter().any(|x| (x - S0).abs() < 1e-8);
            prop_assert!(near_s0 || ea == eb);
        }

        #[test]
        fn window_is_shift_invariant(
            gaps in prop::collection::vec(0.01f64..2.0, 20..300),
            shift in -50.0f64..50.0,
        ) {
            let mut levels = vec![0.0];
            for g in &gaps {
                levels.push(levels.last().unwrap() + g);
            }
            let shifted: Vec<f64> = levels.iter().map(|e| e + shift).collect();
            let a = window_spacings(&levels, 0.25);
            let b = window_spacings(&shifted, 0.25);
            if let (Ok(a), Ok(b)) = (a, b) {
                // A level sitting right on a window edge can flip under
                // rounding; otherwise the spacings must agree.
                if a.len() == b.len() {
                    for (x, y) in a.iter().zip(&b) {
                        prop_assert!((x - y).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
