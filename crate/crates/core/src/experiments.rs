//! Disorder ensembles, coupling sweeps, critical couplings, scaling fits
//! and the melting map.
//!
//! Realization `k` of an ensemble is seeded with
//! `derive_seed(master_seed, k)` and its couplings are the same unit draws
//! scaled by whatever `J` is being evaluated. Results are gathered in index
//! order, so they do not depend on the worker pool or on scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_hamiltonian, enumerate_sector, ParitySector, SectorHamiltonian};
use crate::eigen::{diagonalize, EigenDecomposition};
use crate::eigenstate::{eigenvector_entropy, mean_and_sem, mean_entropy};
use crate::error::{Error, Result};
use crate::lattice::{build_bonds, derive_seed, Bond, DisorderRealization, ModelParams};
use crate::spectral::{eta, normalized_spacings, select_window, SpacingSample};

/// Log-spaced default coupling grid, in units of Δ0.
pub const DEFAULT_J_GRID: [f64; 9] = [0.02, 0.03, 0.05, 0.08, 0.12, 0.18, 0.27, 0.40, 0.48];

pub const DEFAULT_ETA_TARGET: f64 = 0.3;
pub const DEFAULT_SQ_TARGET: f64 = 1.0;

/// Default realization count for a lattice of `n` sites.
pub fn default_realizations(n: usize) -> usize {
    match n {
        0..=6 => 2000,
        7..=9 => 400,
        10..=12 => 100,
        _ => 20,
    }
}

/// Everything that stays fixed across the realizations of one model.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub bonds: Vec<Bond>,
    pub sector: ParitySector,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Model> {
        params.validate()?;
        let bonds = build_bonds(params.lx, params.ly)?;
        let sector = enumerate_sector(params.n(), params.parity)?;
        Ok(Model {
            params,
            bonds,
            sector,
        })
    }

    pub fn realization(&self, seed: u64) -> DisorderRealization {
        DisorderRealization::sample(&self.params, self.bonds.len(), seed)
    }

    pub fn hamiltonian(&self, realization: &DisorderRealization) -> Result<SectorHamiltonian> {
        build_hamiltonian(&self.sector, realization, &self.bonds)
    }

    /// Builds and diagonalizes realization `index` of the ensemble.
    pub fn solve(
        &self,
        master_seed: u64,
        index: usize,
    ) -> Result<(SectorHamiltonian, EigenDecomposition)> {
        let seed = derive_seed(master_seed, index);
        let wrap = |e: Error| Error::Realization {
            index,
            seed,
            source: Box::new(e),
        };
        let h = self.hamiltonian(&self.realization(seed)).map_err(wrap)?;
        let d = diagonalize(&h).map_err(wrap)?;
        Ok((h, d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub index: usize,
    pub seed: u64,
    pub window_levels: usize,
    pub eta: f64,
    /// Mean entropy over the window eigenstates.
    pub sq_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRealization {
    pub index: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub j: f64,
    pub sample: SpacingSample,
    /// `η` of the pooled spacings.
    pub eta: f64,
    /// Standard error of the per-realization `η`.
    pub eta_sem: f64,
    pub sq_mean: f64,
    pub sq_sem: f64,
    pub realizations: Vec<RealizationSummary>,
    pub skipped: Vec<SkippedRealization>,
}

enum Outcome {
    Used(RealizationSummary, Vec<f64>),
    Skipped(SkippedRealization, Error),
}

fn analyze(model: &Model, base: &DisorderRealization, j: f64, index: usize) -> Result<Outcome> {
    let realization = base.rescaled(j);
    let seed = realization.seed;
    let wrap = |e: Error| Error::Realization {
        index,
        seed,
        source: Box::new(e),
    };
    let h = model.hamiltonian(&realization).map_err(wrap)?;
    let d = diagonalize(&h).map_err(wrap)?;
    let window = match select_window(&d.eigenvalues, model.params.window_fraction) {
        Ok(w) => w,
        Err(e) => return Ok(skipped(index, seed, e)),
    };
    let spacings = match normalized_spacings(&d.eigenvalues[window.clone()]) {
        Ok(s) => s,
        Err(e) => return Ok(skipped(index, seed, e)),
    };
    let (sq_mean, _) = mean_entropy(&d, window.clone())?;
    let summary = RealizationSummary {
        index,
        seed,
        window_levels: window.len(),
        eta: eta(&spacings)?,
        sq_mean,
    };
    Ok(Outcome::Used(summary, spacings))
}

fn skipped(index: usize, seed: u64, e: Error) -> Outcome {
    Outcome::Skipped(
        SkippedRealization {
            index,
            seed,
            reason: e.to_string(),
        },
        e,
    )
}

fn aggregate(j: f64, outcomes: Vec<Outcome>) -> Result<EnsembleResult> {
    let mut sample = SpacingSample::default();
    let mut realizations = Vec::new();
    let mut skipped = Vec::new();
    let mut first_failure = None;
    for outcome in outcomes {
        match outcome {
            Outcome::Used(summary, spacings) => {
                sample.push_realization(&spacings);
                realizations.push(summary);
            }
            Outcome::Skipped(info, err) => {
                if first_failure.is_none() {
                    first_failure = Some((info.index, info.seed, err));
                }
                skipped.push(info);
            }
        }
    }
    if realizations.is_empty() {
        return Err(match first_failure {
            Some((index, seed, source)) => Error::Realization {
                index,
                seed,
                source: Box::new(source),
            },
            None => Error::EmptySample,
        });
    }
    let etas: Vec<f64> = realizations.iter().map(|r| r.eta).collect();
    let sqs: Vec<f64> = realizations.iter().map(|r| r.sq_mean).collect();
    let (_, eta_sem) = mean_and_sem(&etas);
    let (sq_mean, sq_sem) = mean_and_sem(&sqs);
    Ok(EnsembleResult {
        j,
        eta: sample.eta()?,
        sample,
        eta_sem,
        sq_mean,
        sq_sem,
        realizations,
        skipped,
    })
}

fn check_grid(j_grid: &[f64]) -> Result<()> {
    if j_grid.is_empty() {
        return Err(Error::InvalidParameter {
            field: "j_grid",
            reason: "grid is empty".into(),
        });
    }
    if j_grid.iter().any(|j| !(j.is_finite() && *j >= 0.0)) {
        return Err(Error::InvalidParameter {
            field: "j_grid",
            reason: "couplings must be finite and non-negative".into(),
        });
    }
    if j_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            field: "j_grid",
            reason: "grid must be strictly ascending".into(),
        });
    }
    Ok(())
}

/// Runs `n_d` realizations at coupling bound `j`.
pub fn run_ensemble(
    params: &ModelParams,
    j: f64,
    n_d: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    let mut results = sweep_ensembles(params, &[j], n_d, master_seed)?;
    Ok(results.remove(0))
}

/// One ensemble per grid value; all `(J, realization)` pairs share one
/// work queue.
pub fn sweep_ensembles(
    params: &ModelParams,
    j_grid: &[f64],
    n_d: usize,
    master_seed: u64,
) -> Result<Vec<EnsembleResult>> {
    check_grid(j_grid)?;
    if n_d == 0 {
        return Err(Error::InvalidParameter {
            field: "n_d",
            reason: "need at least one realization".into(),
        });
    }
    let model = Model::new(*params)?;
    let bases: Vec<DisorderRealization> = (0..n_d)
        .map(|k| model.realization(derive_seed(master_seed, k)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..j_grid.len())
        .flat_map(|g| (0..n_d).map(move |k| (g, k)))
        .collect();
    let outcomes = tasks
        .into_par_iter()
        .map(|(g, k)| analyze(&model, &bases[k], j_grid[g], k))
        .collect::<Result<Vec<Outcome>>>()?;

    let mut outcomes = outcomes.into_iter();
    j_grid
        .iter()
        .map(|&j| aggregate(j, outcomes.by_ref().take(n_d).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub j: f64,
    /// Pooled-spacing `η`.
    pub eta_mean: f64,
    pub eta_sem: f64,
    pub sq_mean: f64,
    pub sq_sem: f64,
    pub n_s: usize,
    pub n_d: usize,
    pub skipped: usize,
}

impl From<&EnsembleResult> for SweepPoint {
    fn from(r: &EnsembleResult) -> Self {
        SweepPoint {
            j: r.j,
            eta_mean: r.eta,
            eta_sem: r.eta_sem,
            sq_mean: r.sq_mean,
            sq_sem: r.sq_sem,
            n_s: r.sample.n_s(),
            n_d: r.sample.n_d,
            skipped: r.skipped.len(),
        }
    }
}

pub fn sweep_j(
    params: &ModelParams,
    j_grid: &[f64],
    n_d: usize,
    master_seed: u64,
) -> Result<Vec<SweepPoint>> {
    Ok(sweep_ensembles(params, j_grid, n_d, master_seed)?
        .iter()
        .map(SweepPoint::from)
        .collect())
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "j,eta_mean,eta_sem,sq_mean,sq_sem,n_s,n_d")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.j, p.eta_mean, p.eta_sem, p.sq_mean, p.sq_sem, p.n_s, p.n_d
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Eta,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub observable: Observable,
    pub value: f64,
}

impl Target {
    /// `η = 0.3`, the chaos border `J_c`.
    pub fn chaos_border() -> Target {
        Target {
            observable: Observable::Eta,
            value: DEFAULT_ETA_TARGET,
        }
    }

    /// `S_q = 1`, the two-state mixing border `J_cs`.
    pub fn entropy_border() -> Target {
        Target {
            observable: Observable::Entropy,
            value: DEFAULT_SQ_TARGET,
        }
    }

    fn read(&self, p: &SweepPoint) -> f64 {
        match self.observable {
            Observable::Eta => p.eta_mean,
            Observable::Entropy => p.sq_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalResult {
    pub j_crit: f64,
    pub target: Target,
    /// Couplings of the two sweep points around the crossing.
    pub bracket: (f64, f64),
    /// The curve crosses the target more than once; the first crossing is
    /// reported.
    pub ambiguous: bool,
}

/// Locates the first crossing of `target` along ascending `J`, interpolating
/// linearly in `(ln J, observable)`. A bracket starting at `J = 0` is
/// interpolated linearly in `J`.
pub fn find_critical(sweep: &[SweepPoint], target: Target) -> Result<CriticalResult> {
    let t = target.value;
    let crossings: Vec<usize> = sweep
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let (a, b) = (target.read(&w[0]) - t, target.read(&w[1]) - t);
            a * b < 0.0 || (b == 0.0 && a != 0.0)
        })
        .map(|(k, _)| k)
        .collect();
    let Some(&k) = crossings.first() else {
        return Err(Error::NotBracketed {
            target: t,
            j_lo: sweep.first().map_or(f64::NAN, |p| p.j),
            j_hi: sweep.last().map_or(f64::NAN, |p| p.j),
        });
    };
    let (lo, hi) = (&sweep[k], &sweep[k + 1]);
    let (ya, yb) = (target.read(lo), target.read(hi));
    let frac = (t - ya) / (yb - ya);
    let j_crit = if lo.j > 0.0 {
        (lo.j.ln() + frac * (hi.j.ln() - lo.j.ln())).exp()
    } else {
        lo.j + frac * (hi.j - lo.j)
    };
    Ok(CriticalResult {
        j_crit,
        target,
        bracket: (lo.j, hi.j),
        ambiguous: crossings.len() > 1,
    })
}

/// [`find_critical`] with the model-level guard: level statistics cannot
/// define a chaos border at `δ = 0`.
pub fn locate_critical(
    params: &ModelParams,
    sweep: &[SweepPoint],
    target: Target,
) -> Result<CriticalResult> {
    if target.observable == Observable::Eta && params.delta == 0.0 {
        return Err(Error::QuasiDegenerate);
    }
    find_critical(sweep, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "slope")]
pub enum FitMode {
    /// Power law with the given exponent; only the coefficient is fitted.
    FixedSlope(f64),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `C` in `y = C x^slope`.
    pub coefficient: f64,
    pub slope: f64,
    /// `ln y − ln ŷ` per point.
    pub residuals: Vec<f64>,
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_scaling(points: &[(f64, f64)], mode: FitMode) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter {
            field: "points",
            reason: "need at least two points".into(),
        });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParameter {
            field: "points",
            reason: "scaling fits need positive values".into(),
        });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = match mode {
        FitMode::FixedSlope(s) => s,
        FitMode::Free => {
            let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
            if sxx == 0.0 {
                return Err(Error::InvalidParameter {
                    field: "points",
                    reason: "free slope needs at least two distinct x".into(),
                });
            }
            let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
            sxy / sxx
        }
    };
    let intercept = mean_y - slope * mean_x;
    let residuals = logs
        .iter()
        .map(|&(lx, ly)| ly - (intercept + slope * lx))
        .collect();
    Ok(ScalingFit {
        coefficient: intercept.exp(),
        slope,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeltingMap {
    pub j_values: Vec<f64>,
    pub n_bins: usize,
    /// `(E_ground, E_max)` per row.
    pub energy_ranges: Vec<(f64, f64)>,
    /// Mean entropy per `[row][bin]`; `None` for empty bins.
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    pub seed: u64,
}

impl MeltingMap {
    /// Bin edges of row `row`, in energy counted from the ground state.
    pub fn bin_edges(&self, row: usize, bin: usize) -> (f64, f64) {
        let (lo, hi) = self.energy_ranges[row];
        let width = (hi - lo) / self.n_bins as f64;
        (bin as f64 * width, (bin + 1) as f64 * width)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "j,bin_left,bin_right,sq_mean,count")?;
        for (row, j) in self.j_values.iter().enumerate() {
            for bin in 0..self.n_bins {
                let (left, right) = self.bin_edges(row, bin);
                let sq = self.cells[row][bin].map_or(String::new(), |v| v.to_string());
                writeln!(out, "{j},{left},{right},{sq},{}", self.counts[row][bin])?;
            }
        }
        Ok(())
    }
}

/// Bin of an eigenstate at relative position `x ∈ [0, 1]` of the spectrum.
fn energy_bin(x: f64, n_bins: usize) -> usize {
    ((x * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Mean entropy over (eigenstate energy, `J`) for one realization, whose
/// unit coupling draws are rescaled to every grid value.
pub fn melting_map(
    params: &ModelParams,
    j_grid: &[f64],
    n_bins: usize,
    master_seed: u64,
) -> Result<MeltingMap> {
    check_grid(j_grid)?;
    if n_bins < 2 {
        return Err(Error::InvalidParameter {
            field: "bins",
            reason: format!("{n_bins} energy bins, need at least 2"),
        });
    }
    let model = Model::new(*params)?;
    let seed = derive_seed(master_seed, 0);
    let base = model.realization(seed);
    let rows = j_grid
        .par_iter()
        .map(|&j| {
            let h = model.hamiltonian(&base.rescaled(j))?;
            let d = diagonalize(&h)?;
            let lo = d.eigenvalues[0];
            let hi = *d.eigenvalues.last().unwrap();
            let width = hi - lo;
            let mut sums = vec![0.0; n_bins];
            let mut counts = vec![0usize; n_bins];
            for (k, &e) in d.eigenvalues.iter().enumerate() {
                let x = if width > 0.0 { (e - lo) / width } else { 0.0 };
                let bin = energy_bin(x, n_bins);
                sums[bin] += eigenvector_entropy(d.eigenvector(k));
                counts[bin] += 1;
            }
            let cells = sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| (c > 0).then(|| s / c as f64))
                .collect::<Vec<_>>();
            Ok(((lo, hi), cells, counts))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Realization {
            index: 0,
            seed,
            source: Box::new(e),
        })?;

    let mut map = MeltingMap {
        j_values: j_grid.to_vec(),
        n_bins,
        energy_ranges: Vec::with_capacity(rows.len()),
        cells: Vec::with_capacity(rows.len()),
        counts: Vec::with_capacity(rows.len()),
        seed,
    };
    for (range, cells, counts) in rows {
        map.energy_ranges.push(range);
        map.cells.push(cells);
        map.counts.push(counts);
    }
    Ok(map)
}
