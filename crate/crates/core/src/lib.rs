//! Exact-diagonalization study of the chaos border in a disordered
//! coupled-qubit register.
//!
//! The model is `H = Σ_i Γ_i σ_i^z + Σ_<ij> J_ij σ_i^x σ_j^x` on a periodic
//! 2D lattice, with `Γ_i` uniform on `[Δ0 − δ/2, Δ0 + δ/2]` and `J_ij` uniform
//! on `[−J, J]`. Energies are in units of `Δ0`.

pub mod basis;
pub mod cli;
pub mod eigen;
pub mod eigenstate;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod spectral;

pub use error::{Error, Result};
