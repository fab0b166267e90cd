//! Parity-sector basis and dense sector Hamiltonian.
//!
//! Bit `i` of a basis state is qubit `i`; a set bit is "qubit up" and
//! contributes `σ_z = −1`. The `σ_x σ_x` couplings flip two bits at once,
//! so popcount parity is conserved and the Hamiltonian splits into two
//! sectors of dimension `2^(n−1)`.

use std::io::Write;

use faer::Mat;

use crate::error::{Error, Result};
use crate::lattice::{Bond, DisorderRealization, Parity};

/// Largest qubit count accepted for a dense sector by default.
pub const DEFAULT_QUBIT_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParitySector {
    pub n: usize,
    pub parity: Parity,
    /// Sector states in ascending order.
    pub states: Vec<u64>,
}

impl ParitySector {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Row index of `state`, or `None` if it lies outside the sector.
    ///
    /// States `2k` and `2k + 1` differ only in bit 0, so exactly one of them
    /// belongs to each parity and the ascending rank is `state >> 1`.
    pub fn index_of(&self, state: u64) -> Option<usize> {
        if state >> self.n != 0 || Parity::of_state(state) != self.parity {
            return None;
        }
        Some((state >> 1) as usize)
    }
}

pub fn enumerate_sector(n: usize, parity: Parity) -> Result<ParitySector> {
    enumerate_sector_with_cap(n, parity, DEFAULT_QUBIT_CAP)
}

pub fn enumerate_sector_with_cap(n: usize, parity: Parity, cap: usize) -> Result<ParitySector> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            field: "n",
            reason: "a sector needs at least one qubit".into(),
        });
    }
    if n > cap || n > 63 {
        return Err(Error::Capacity { n, cap });
    }
    let states = (0u64..1 << n)
        .filter(|&s| Parity::of_state(s) == parity)
        .collect();
    Ok(ParitySector { n, parity, states })
}

/// `Σ_i Γ_i (1 − 2 b_i)` for the bits `b_i` of `state`.
pub fn diagonal_energy(state: u64, gammas: &[f64]) -> f64 {
    gammas
        .iter()
        .enumerate()
        .map(|(i, g)| if state >> i & 1 == 1 { -g } else { *g })
        .sum()
}

#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    pub matrix: Mat<f64>,
    /// Noninteracting energies `E_i`, equal to the diagonal.
    pub diag_energies: Vec<f64>,
    /// Seed of the realization the matrix was built from.
    pub seed: u64,
}

impl SectorHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag_energies.len()
    }

    /// Writes nonzero entries (upper and lower triangle) as `row col value`
    /// lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.dim();
        for row in 0..dim {
            for col in 0..dim {
                let v = self.matrix[(row, col)];
                if v != 0.0 {
                    writeln!(out, "{row} {col} {v:e}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn build_hamiltonian(
    sector: &ParitySector,
    realization: &DisorderRealization,
    bonds: &[Bond],
) -> Result<SectorHamiltonian> {
    if realization.n() != sector.n {
        return Err(Error::DimensionMismatch {
            expected: sector.n,
            got: realization.n(),
        });
    }
    if realization.couplings.len() != bonds.len() {
        return Err(Error::DimensionMismatch {
            expected: bonds.len(),
            got: realization.couplings.len(),
        });
    }
    if let Some(b) = bonds.iter().find(|b| b.j >= sector.n) {
        return Err(Error::InvalidParameter {
            field: "bonds",
            reason: format!("bond ({}, {}) outside {} sites", b.i, b.j, sector.n),
        });
    }

    let dim = sector.dim();
    let diag_energies: Vec<f64> = sector
        .states
        .iter()
        .map(|&s| diagonal_energy(s, &realization.gammas))
        .collect();
    let mut matrix = Mat::<f64>::zeros(dim, dim);
    for (a, &state) in sector.states.iter().enumerate() {
        matrix[(a, a)] = diag_energies[a];
        for (bond, &coupling) in bonds.iter().zip(&realization.couplings) {
            // Distinct bonds have distinct masks, so each (a, b) is hit once
            // from row a and once from row b with the same value.
            let b = ((state ^ bond.mask()) >> 1) as usize;
            matrix[(a, b)] += coupling;
        }
    }
    Ok(SectorHamiltonian {
        matrix,
        diag_energies,
        seed: realization.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_bonds, ModelParams};

    fn ring(n: usize) -> Vec<Bond> {
        (0..n).map(|i| Bond::new(i, (i + 1) % n)).collect()
    }

    #[test]
    fn small_sectors() {
        let even = enumerate_sector(3, Parity::Even).unwrap();
        assert_eq!(even.states, vec![0b000, 0b011, 0b101, 0b110]);
        let odd = enumerate_sector(2, Parity::Odd).unwrap();
        assert_eq!(odd.states, vec![0b01, 0b10]);
        assert_eq!(enumerate_sector(12, Parity::Even).unwrap().dim(), 2048);
        assert_eq!(enumerate_sector(12, Parity::Odd).unwrap().dim(), 2048);
    }

    #[test]
    fn index_round_trip() {
        for n in 1..=10 {
            for parity in [Parity::Even, Parity::Odd] {
                let s = enumerate_sector(n, parity).unwrap();
                assert_eq!(s.dim(), 1 << (n - 1));
                assert!(s.states.windows(2).all(|w| w[0] < w[1]));
                for (k, &st) in s.states.iter().enumerate() {
                    assert_eq!(st.count_ones() % 2, parity.bit());
                    assert_eq!(s.index_of(st), Some(k));
                    assert_eq!(s.index_of(st ^ 1), None);
                }
                assert_eq!(s.index_of(1 << n), None);
            }
        }
    }

    #[test]
    fn capacity_cap() {
        assert!(matches!(
            enumerate_sector(17, Parity::Even),
            Err(Error::Capacity { n: 17, cap: 16 })
        ));
        assert!(enumerate_sector_with_cap(5, Parity::Even, 4).is_err());
    }

    #[test]
    fn diagonal_energies() {
        assert_eq!(diagonal_energy(0, &[1.0; 12]), 12.0);
        assert!((diagonal_energy(0b01, &[0.8, 1.2]) - 0.4).abs() < 1e-15);
        let gammas = [0.7, 1.1, 1.3, 0.9, 1.25];
        let total: f64 = (0..32u64).map(|s| diagonal_energy(s, &gammas)).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn two_qubit_even_sector() {
        let sector = enumerate_sector(2, Parity::Even).unwrap();
        let r = DisorderRealization {
            gammas: vec![0.9, 1.3],
            couplings: vec![0.25],
            coupling_units: vec![0.5],
            j_bound: 0.5,
            seed: 0,
        };
        let h = build_hamiltonian(&sector, &r, &[Bond::new(0, 1)]).unwrap();
        assert_eq!(h.matrix[(0, 0)], 0.9 + 1.3);
        assert_eq!(h.matrix[(1, 1)], -0.9 - 1.3);
        assert_eq!(h.matrix[(0, 1)], 0.25);
        assert_eq!(h.matrix[(1, 0)], 0.25);
    }

    #[test]
    fn ring_rows_have_one_entry_per_bond() {
        let bonds = ring(3);
        let sector = enumerate_sector(3, Parity::Even).unwrap();
        let r = DisorderRealization {
            gammas: vec![1.0, 0.8, 1.2],
            couplings: vec![0.1, -0.2, 0.3],
            coupling_units: vec![0.2, -0.4, 0.6],
            j_bound: 0.5,
            seed: 0,
        };
        let h = build_hamiltonian(&sector, &r, &bonds).unwrap();
        for a in 0..4 {
            let off = (0..4)
                .filter(|&b| b != a && h.matrix[(a, b)] != 0.0)
                .count();
            assert_eq!(off, 3);
        }
    }

    #[test]
    fn structure_on_torus() {
        let params = ModelParams::new(2, 3, 1.0, 0.4).unwrap();
        let bonds = build_bonds(2, 3).unwrap();
        let r = DisorderRealization::sample(&params, bonds.len(), 11);
        let mut full_trace = 0.0;
        let mut dims = 0;
        for parity in [Parity::Even, Parity::Odd] {
            let sector = enumerate_sector(6, parity).unwrap();
            let h = build_hamiltonian(&sector, &r, &bonds).unwrap();
            dims += h.dim();
            for a in 0..h.dim() {
                full_trace += h.matrix[(a, a)];
                assert_eq!(h.diag_energies[a], h.matrix[(a, a)]);
                let mut support = 0;
                for b in 0..h.dim() {
                    assert_eq!(h.matrix[(a, b)].to_bits(), h.matrix[(b, a)].to_bits());
                    if a != b && h.matrix[(a, b)] != 0.0 {
                        support += 1;
                        let flipped = sector.states[a] ^ sector.states[b];
                        assert!(bonds.iter().any(|bd| bd.mask() == flipped));
                    }
                }
                assert_eq!(support, bonds.len());
            }
        }
        assert_eq!(dims, 64);
        assert!(full_trace.abs() < 1e-12);
    }

    #[test]
    fn mismatched_realization() {
        let sector = enumerate_sector(3, Parity::Even).unwrap();
        let r = DisorderRealization {
            gammas: vec![1.0; 4],
            couplings: vec![],
            coupling_units: vec![],
            j_bound: 0.0,
            seed: 0,
        };
        assert!(matches!(
            build_hamiltonian(&sector, &r, &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn triplet_dump() {
        let sector = enumerate_sector(2, Parity::Even).unwrap();
        let r = DisorderRealization {
            gammas: vec![1.0, 1.0],
            couplings: vec![0.5],
            coupling_units: vec![1.0],
            j_bound: 0.5,
            seed: 0,
        };
        let h = build_hamiltonian(&sector, &r, &[Bond::new(0, 1)]).unwrap();
        let mut buf = Vec::new();
        h.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0 0 2e0\n0 1 5e-1\n1 0 5e-1\n1 1 -2e0\n");
    }
}
