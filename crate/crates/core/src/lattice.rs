//! Model parameters, torus bond structure, disorder sampling and the
//! closed-form scale estimates.
//!
//! All energies are measured in units of the mean one-qubit splitting
//! `Δ0`, which is fixed to [`DELTA0`].

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy unit. Every energy in the crate is a multiple of this.
pub const DELTA0: f64 = 1.0;

/// Default constant in the generic-regime chaos border `J_c = C Δ0 / n`.
pub const DEFAULT_JC_CONSTANT: f64 = 3.16;

/// Coefficient of the band-regime border `J_cs ≈ 0.4 δ / n`.
pub const BAND_JC_COEFFICIENT: f64 = 0.4;

/// Default half-width of the central energy window, as a fraction of the
/// bandwidth.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.0625;

/// Popcount parity of a symmetry sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    #[default]
    Even,
    Odd,
}

impl Parity {
    pub fn bit(self) -> u32 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn of_state(state: u64) -> Parity {
        if state.count_ones() % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// The experiment's knobs: lattice geometry, disorder width, coupling bound
/// and the analysis window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lx: usize,
    pub ly: usize,
    /// Disorder width δ of the splittings, in units of Δ0.
    pub delta: f64,
    /// Coupling bound J, in units of Δ0.
    pub j_bound: f64,
    pub window_fraction: f64,
    pub parity: Parity,
}

impl ModelParams {
    pub fn new(lx: usize, ly: usize, delta: f64, j_bound: f64) -> Result<Self> {
        let params = ModelParams {
            lx,
            ly,
            delta,
            j_bound,
            window_fraction: DEFAULT_WINDOW_FRACTION,
            parity: Parity::Even,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_window_fraction(mut self, fraction: f64) -> Result<Self> {
        self.window_fraction = fraction;
        self.validate()?;
        Ok(self)
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    /// Same parameters at a different coupling bound.
    pub fn with_j(mut self, j_bound: f64) -> Result<Self> {
        self.j_bound = j_bound;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    /// Qubit count.
    pub fn n(&self) -> usize {
        self.lx * self.ly
    }

    pub fn validate(&self) -> Result<()> {
        if self.lx == 0 || self.ly == 0 || self.lx * self.ly < 2 {
            return Err(Error::InvalidGeometry {
                lx: self.lx,
                ly: self.ly,
            });
        }
        if !(0.0..=DELTA0).contains(&self.delta) {
            return Err(Error::InvalidParameter {
                field: "delta",
                reason: format!("{} is outside [0, {}]", self.delta, DELTA0),
            });
        }
        if !(self.j_bound >= 0.0 && self.j_bound.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "j_bound",
                reason: format!("{} must be finite and non-negative", self.j_bound),
            });
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 0.5) {
            return Err(Error::InvalidParameter {
                field: "window_fraction",
                reason: format!("{} is outside (0, 0.5]", self.window_fraction),
            });
        }
        Ok(())
    }
}

/// A nearest-neighbour pair of sites, always stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
}

impl Bond {
    pub fn new(a: usize, b: usize) -> Bond {
        assert_ne!(a, b, "a bond needs two distinct sites");
        Bond {
            i: a.min(b),
            j: a.max(b),
        }
    }

    /// Bit mask flipping both ends of the bond.
    pub fn mask(&self) -> u64 {
        (1u64 << self.i) | (1u64 << self.j)
    }
}

/// Nearest-neighbour bonds of the `lx × ly` torus. Cell `(x, y)` is site
/// `y·lx + x`. Wraparound bonds that repeat an existing pair (extent 2) or
/// close on themselves (extent 1) are dropped, so each pair appears once.
pub fn build_bonds(lx: usize, ly: usize) -> Result<Vec<Bond>> {
    if lx == 0 || ly == 0 || lx * ly < 2 {
        return Err(Error::InvalidGeometry { lx, ly });
    }
    let site = |x: usize, y: usize| y * lx + x;
    let mut bonds = BTreeSet::new();
    for y in 0..ly {
        for x in 0..lx {
            let here = site(x, y);
            for there in [site((x + 1) % lx, y), site(x, (y + 1) % ly)] {
                if there != here {
                    bonds.insert(Bond::new(here, there));
                }
            }
        }
    }
    Ok(bonds.into_iter().collect())
}

/// One disorder sample: splittings `Γ_i` and couplings `J_ij`.
///
/// The couplings are kept as unit draws on `[-1, 1)` scaled by the bound,
/// so one realization can be re-evaluated at any `J` without redrawing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub gammas: Vec<f64>,
    /// `J_ij`, one per bond, in bond-list order.
    pub couplings: Vec<f64>,
    /// The unit draws behind `couplings`.
    pub coupling_units: Vec<f64>,
    pub j_bound: f64,
    pub seed: u64,
}

impl DisorderRealization {
    /// Draws `Γ_i` uniformly on `[Δ0 − δ/2, Δ0 + δ/2]` and `J_ij` uniformly on
    /// `[−J, J]`, from a generator seeded with `seed`.
    pub fn sample(params: &ModelParams, n_bonds: usize, seed: u64) -> DisorderRealization {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas = (0..params.n())
            .map(|_| DELTA0 + params.delta * (rng.random::<f64>() - 0.5))
            .collect();
        let coupling_units: Vec<f64> = (0..n_bonds)
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        let couplings = coupling_units.iter().map(|u| params.j_bound * u).collect();
        DisorderRealization {
            gammas,
            couplings,
            coupling_units,
            j_bound: params.j_bound,
            seed,
        }
    }

    /// The same splittings and unit draws with the couplings scaled to a new
    /// bound.
    pub fn rescaled(&self, j_bound: f64) -> DisorderRealization {
        DisorderRealization {
            gammas: self.gammas.clone(),
            couplings: self.coupling_units.iter().map(|u| j_bound * u).collect(),
            coupling_units: self.coupling_units.clone(),
            j_bound,
            seed: self.seed,
        }
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-realization seed, a hash of the master seed and the realization index.
pub fn derive_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(index as u64))
}

/// Mean many-body level spacing `Δ_n ≈ n Δ0 / 2^n`, carried in log10 so that
/// it stays meaningful far below the smallest `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingEstimate {
    pub n: usize,
    pub log10: f64,
}

impl SpacingEstimate {
    /// Linear value; underflows to zero for very large `n`.
    pub fn value(&self) -> f64 {
        10f64.powf(self.log10)
    }
}

pub fn multiqubit_spacing(n: usize, delta0: f64) -> SpacingEstimate {
    let log10 = (n as f64).log10() + delta0.log10() - n as f64 * std::f64::consts::LOG10_2;
    SpacingEstimate { n, log10 }
}

/// Returns `(c·Δ0/n, 0.4·δ/n)`: the generic chaos border and the band-regime
/// entropy border.
pub fn theoretical_jc(n: usize, delta0: f64, delta: f64, c: f64) -> (f64, f64) {
    let n = n as f64;
    (c * delta0 / n, BAND_JC_COEFFICIENT * delta / n)
}
