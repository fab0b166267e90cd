//! Command-line surface: JSON run configuration, subcommands, CSV/JSON
//! outputs and run manifests.
//!
//! Every command that writes files also writes one
//! `<command>.manifest.json` next to them, recording the resolved config,
//! seed, version, start time, wall time and skipped realizations. A
//! manifest can be fed back to `--config` to repeat the run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eigen::validate;
use crate::error::{Error, Result};
use crate::experiments::{
    default_realizations, fit_scaling, locate_critical, melting_map, sweep_ensembles,
    write_sweep_csv, CriticalResult, EnsembleResult, FitMode, Model, Observable, ScalingFit,
    SweepPoint, Target, DEFAULT_ETA_TARGET, DEFAULT_J_GRID, DEFAULT_SQ_TARGET,
};
use crate::lattice::{
    multiqubit_spacing, theoretical_jc, ModelParams, Parity, DEFAULT_JC_CONSTANT,
    DEFAULT_WINDOW_FRACTION, DELTA0,
};
use crate::spectral::{spacing_histogram, DEFAULT_BIN_WIDTH, DEFAULT_S_MAX};

/// Overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "QCHAOS_OUTPUT_DIR";

pub const DEFAULT_MELT_BINS: usize = 24;

fn default_delta() -> f64 {
    1.0
}
fn default_window_fraction() -> f64 {
    DEFAULT_WINDOW_FRACTION
}
fn default_j_grid() -> Vec<f64> {
    DEFAULT_J_GRID.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_eta_target() -> f64 {
    DEFAULT_ETA_TARGET
}
fn default_sq_target() -> f64 {
    DEFAULT_SQ_TARGET
}
fn default_melt_bins() -> usize {
    DEFAULT_MELT_BINS
}
fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH
}
fn default_s_max() -> f64 {
    DEFAULT_S_MAX
}

/// Runs for the `scaling` command: either several lattices at the
/// configured `delta`, or several `delta` values on the configured lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default)]
    pub lattices: Vec<[usize; 2]>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    /// Multiply the coupling grid by `delta` for each run.
    #[serde(default)]
    pub scale_grid_with_delta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lx: usize,
    pub ly: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_window_fraction")]
    pub window_fraction: f64,
    #[serde(default)]
    pub parity: Parity,
    #[serde(default = "default_j_grid")]
    pub j_grid: Vec<f64>,
    /// Realizations per coupling; defaults by lattice size.
    #[serde(default)]
    pub n_d: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eta_target")]
    pub eta_target: f64,
    #[serde(default = "default_sq_target")]
    pub sq_target: f64,
    /// Coupling for single-`J` commands (`spectrum`, `pss`); defaults to the
    /// last grid value.
    #[serde(default)]
    pub j: Option<f64>,
    /// Realization index for `spectrum`.
    #[serde(default)]
    pub realization: usize,
    #[serde(default = "default_melt_bins")]
    pub energy_bins: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default)]
    pub scaling: Option<ScalingConfig>,
}

fn field_error(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {reason}"))
}

impl RunConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            lx: self.lx,
            ly: self.ly,
            delta: self.delta,
            j_bound: self.coupling(),
            window_fraction: self.window_fraction,
            parity: self.parity,
        };
        params.validate().map_err(|e| match e {
            Error::InvalidParameter { field, reason } => field_error(field, reason),
            Error::InvalidGeometry { lx, ly } => field_error(
                "lx/ly",
                format!("{lx}x{ly} lattice needs at least two sites"),
            ),
            other => other,
        })?;
        Ok(params)
    }

    pub fn n(&self) -> usize {
        self.lx * self.ly
    }

    pub fn realizations(&self) -> usize {
        self.n_d.unwrap_or_else(|| default_realizations(self.n()))
    }

    pub fn coupling(&self) -> f64 {
        self.j
            .unwrap_or_else(|| self.j_grid.last().copied().unwrap_or(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        if self.j_grid.is_empty() {
            return Err(field_error("j_grid", "must hold at least one coupling"));
        }
        if self.j_grid.iter().any(|j| !(j.is_finite() && *j >= 0.0)) {
            return Err(field_error(
                "j_grid",
                "couplings must be finite and non-negative",
            ));
        }
        if self.j_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_error("j_grid", "must be strictly ascending"));
        }
        if self.n_d == Some(0) {
            return Err(field_error("n_d", "need at least one realization"));
        }
        if let Some(j) = self.j {
            if !(j.is_finite() && j >= 0.0) {
                return Err(field_error("j", "must be finite and non-negative"));
            }
        }
        if self.energy_bins < 2 {
            return Err(field_error("energy_bins", "need at least two bins"));
        }
        if !(self.bin_width > 0.0) {
            return Err(field_error("bin_width", "must be positive"));
        }
        if !(self.s_max > 0.0) {
            return Err(field_error("s_max", "must be positive"));
        }
        if let Some(scaling) = &self.scaling {
            match (scaling.lattices.is_empty(), scaling.deltas.is_empty()) {
                (false, true) | (true, false) => {}
                _ => {
                    return Err(field_error(
                        "scaling",
                        "give exactly one of `lattices` or `deltas`",
                    ))
                }
            }
            for &[lx, ly] in &scaling.lattices {
                if lx == 0 || ly == 0 || lx * ly < 2 {
                    return Err(field_error(
                        "scaling.lattices",
                        format!("{lx}x{ly} is too small"),
                    ));
                }
            }
            for &d in &scaling.deltas {
                if !(d > 0.0 && d <= DELTA0) {
                    return Err(field_error(
                        "scaling.deltas",
                        format!("{d} is outside (0, 1]"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parses a JSON config, or the `config` member of a run manifest, fills
/// defaults and validates it.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
    let value = match value {
        Value::Object(mut map) if map.contains_key("config") && map.contains_key("version") => {
            map.remove("config").unwrap()
        }
        other => other,
    };
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipCount {
    pub run: String,
    pub j: f64,
    pub count: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub master_seed: u64,
    pub version: String,
    /// Unix time in seconds.
    pub started_at: u64,
    pub elapsed_s: f64,
    pub skipped_realizations: Vec<SkipCount>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRecord {
    pub target: Target,
    pub j_crit: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub ambiguous: bool,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
}

impl CriticalRecord {
    fn new(c: &CriticalResult, n: usize, delta: f64, seed: u64) -> Self {
        CriticalRecord {
            target: c.target,
            j_crit: c.j_crit,
            bracket_lo: c.bracket.0,
            bracket_hi: c.bracket.1,
            ambiguous: c.ambiguous,
            n,
            delta,
            seed,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "qchaos",
    version,
    about = "Chaos border of a disordered qubit register"
)]
struct Cli {
    /// Worker threads for the realization pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON run configuration (or a manifest from an earlier run).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues and residual check for one realization.
    Spectrum {
        #[command(flatten)]
        args: ConfigArgs,
        /// Also write the sector matrix as `row col value` triplets.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Spacing histogram and eta at one coupling.
    Pss {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Eta and entropy versus J.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Critical couplings J_c (eta target) and J_cs (entropy target).
    Critical {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Critical couplings over several lattices or disorder widths, with
    /// power-law fits.
    Scaling {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Entropy over eigenstate energy and J for one realization.
    Melt {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Closed-form level spacing and critical-coupling estimates.
    Estimate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_JC_CONSTANT)]
        c: f64,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.threads {
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Estimate { n, delta, c } => estimate(n, delta, c),
        Command::Spectrum { args, dump_matrix } => {
            Run::start("spectrum", &args)?.spectrum(dump_matrix)
        }
        Command::Pss { args } => Run::start("pss", &args)?.pss(),
        Command::Sweep { args } => Run::start("sweep", &args)?.sweep(),
        Command::Critical { args } => Run::start("critical", &args)?.critical(),
        Command::Scaling { args } => Run::start("scaling", &args)?.scaling(),
        Command::Melt { args } => Run::start("melt", &args)?.melt(),
    }
}

fn estimate(n: usize, delta: f64, c: f64) -> Result<()> {
    if n == 0 {
        return Err(field_error("n", "must be at least 1"));
    }
    if !(0.0..=DELTA0).contains(&delta) {
        return Err(field_error("delta", format!("{delta} is outside [0, 1]")));
    }
    let spacing = multiqubit_spacing(n, DELTA0);
    let (jc, jcs) = theoretical_jc(n, DELTA0, delta, c);
    println!("n = {n}, delta = {delta}, C = {c} (energies in units of Delta0)");
    println!(
        "multi-qubit spacing Delta_n = n/2^n: log10 = {:.3}",
        spacing.log10
    );
    println!("chaos border J_c = C/n: {jc:.6e}");
    println!("entropy border J_cs = 0.4 delta/n: {jcs:.6e}");
    Ok(())
}

struct Run {
    command: &'static str,
    config: RunConfig,
    out_dir: PathBuf,
    started_at: u64,
    clock: Instant,
    outputs: Vec<String>,
    skipped: Vec<SkipCount>,
}

impl Run {
    fn start(command: &'static str, args: &ConfigArgs) -> Result<Run> {
        let text = fs::read_to_string(&args.config)?;
        let mut config = parse_config(&text)?;
        let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        if let Some(dir) = args.output_dir.clone().or(env_dir) {
            config.output_dir = dir;
        }
        fs::create_dir_all(&config.output_dir)?;
        Ok(Run {
            command,
            out_dir: config.output_dir.clone(),
            config,
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            clock: Instant::now(),
            outputs: Vec::new(),
            skipped: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn record_skips(&mut self, run: &str, results: &[EnsembleResult]) {
        for r in results {
            self.skipped.push(SkipCount {
                run: run.to_string(),
                j: r.j,
                count: r.skipped.len(),
                indices: r.skipped.iter().map(|s| s.index).collect(),
            });
        }
    }

    fn finish(self) -> Result<()> {
        let manifest = Manifest {
            command: self.command.to_string(),
            master_seed: self.config.master_seed,
            config: self.config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            elapsed_s: self.clock.elapsed().as_secs_f64(),
            skipped_realizations: self.skipped,
            outputs: self.outputs,
        };
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn spectrum(mut self, dump_matrix: bool) -> Result<()> {
        let params = self.config.model_params()?;
        let model = Model::new(params)?;
        let index = self.config.realization;
        let (h, d) = model.solve(self.config.master_seed, index)?;
        let report = validate(&d, h.matrix.as_ref())?;

        let mut w = self.create("spectrum.csv")?;
        writeln!(w, "index,energy")?;
        for (k, e) in d.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{e}")?;
        }
        w.flush()?;
        self.write_json(
            "spectrum_residuals.json",
            &serde_json::json!({
                "j": params.j_bound,
                "realization": index,
                "seed": h.seed,
                "dim": d.dim(),
                "orthonormality": report.orthonormality,
                "orthonormality_tol": report.orthonormality_tol,
                "eigen_residual": report.eigen_residual,
                "residual_tol": report.residual_tol,
                "ok": report.ok(),
            }),
        )?;
        if dump_matrix {
            let mut w = self.create("hamiltonian.txt")?;
            h.write_triplets(&mut w)?;
            w.flush()?;
        }
        println!(
            "dim {} orthonormality {:.3e} residual {:.3e} ({})",
            d.dim(),
            report.orthonormality,
            report.eigen_residual,
            if report.ok() { "ok" } else { "VIOLATION" }
        );
        self.finish()
    }

    fn pss(mut self) -> Result<()> {
        let params = self.config.model_params()?;
        let n_d = self.config.realizations();
        let results = sweep_ensembles(&params, &[params.j_bound], n_d, self.config.master_seed)?;
        self.record_skips("pss", &results);
        let r = &results[0];
        let hist = spacing_histogram(&r.sample.spacings, self.config.bin_width, self.config.s_max)?;
        let mut w = self.create("pss_histogram.csv")?;
        hist.write_csv(&mut w)?;
        w.flush()?;
        self.write_json(
            "pss.json",
            &serde_json::json!({
                "j": r.j,
                "eta": r.eta,
                "eta_sem": r.eta_sem,
                "sq_mean": r.sq_mean,
                "sq_sem": r.sq_sem,
                "n_s": r.sample.n_s(),
                "n_d": r.sample.n_d,
                "overflow": hist.overflow,
            }),
        )?;
        println!(
            "J = {}: eta = {:.4} ± {:.4} (N_S = {}, N_D = {})",
            r.j,
            r.eta,
            r.eta_sem,
            r.sample.n_s(),
            r.sample.n_d
        );
        self.finish()
    }

    fn run_sweep(
        &mut self,
        label: &str,
        params: &ModelParams,
        grid: &[f64],
        n_d: usize,
    ) -> Result<Vec<SweepPoint>> {
        let results = sweep_ensembles(params, grid, n_d, self.config.master_seed)?;
        self.record_skips(label, &results);
        Ok(results.iter().map(SweepPoint::from).collect())
    }

    fn sweep(mut self) -> Result<()> {
        let params = self.config.model_params()?;
        let grid = self.config.j_grid.clone();
        let points = self.run_sweep("sweep", &params, &grid, self.config.realizations())?;
        let mut w = self.create("sweep.csv")?;
        write_sweep_csv(&points, &mut w)?;
        w.flush()?;
        for p in &points {
            println!(
                "J = {:<6} eta = {:.4} ± {:.4}  S_q = {:.4} ± {:.4}",
                p.j, p.eta_mean, p.eta_sem, p.sq_mean, p.sq_sem
            );
        }
        self.finish()
    }

    fn targets(&self) -> [Target; 2] {
        [
            Target {
                observable: Observable::Eta,
                value: self.config.eta_target,
            },
            Target {
                observable: Observable::Entropy,
                value: self.config.sq_target,
            },
        ]
    }

    fn critical(mut self) -> Result<()> {
        let params = self.config.model_params()?;
        let grid = self.config.j_grid.clone();
        let points = self.run_sweep("critical", &params, &grid, self.config.realizations())?;
        let mut w = self.create("critical_sweep.csv")?;
        write_sweep_csv(&points, &mut w)?;
        w.flush()?;

        let mut records = Vec::new();
        let mut failures = Vec::new();
        for target in self.targets() {
            match locate_critical(&params, &points, target) {
                Ok(c) => {
                    println!(
                        "{:?} = {}: J = {:.5}",
                        target.observable, target.value, c.j_crit
                    );
                    records.push(CriticalRecord::new(
                        &c,
                        params.n(),
                        params.delta,
                        self.config.master_seed,
                    ));
                }
                Err(e) => {
                    eprintln!("{:?} = {}: {e}", target.observable, target.value);
                    failures.push(e);
                }
            }
        }
        self.write_json("critical.json", &records)?;
        let all_failed = records.is_empty();
        self.finish()?;
        match failures.into_iter().next() {
            Some(e) if all_failed => Err(e),
            _ => Ok(()),
        }
    }

    fn scaling(mut self) -> Result<()> {
        let base = self.config.model_params()?;
        let scaling = self
            .config
            .scaling
            .clone()
            .ok_or_else(|| field_error("scaling", "required by the scaling command"))?;
        let mut runs: Vec<(f64, ModelParams, Vec<f64>)> = Vec::new();
        let by_size = !scaling.lattices.is_empty();
        if by_size {
            for &[lx, ly] in &scaling.lattices {
                let p = ModelParams { lx, ly, ..base };
                runs.push(((lx * ly) as f64, p, self.config.j_grid.clone()));
            }
        } else {
            for &delta in &scaling.deltas {
                let p = base.with_delta(delta)?;
                let grid = if scaling.scale_grid_with_delta {
                    self.config.j_grid.iter().map(|j| j * delta).collect()
                } else {
                    self.config.j_grid.clone()
                };
                runs.push((delta, p, grid));
            }
        }

        let targets = self.targets();
        let mut records = Vec::new();
        let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); targets.len()];
        let mut csv = String::from("x,n,delta,observable,target,j_crit\n");
        for (x, params, grid) in &runs {
            let n_d = self
                .config
                .n_d
                .unwrap_or_else(|| default_realizations(params.n()));
            let label = format!("n={},delta={}", params.n(), params.delta);
            let points = self.run_sweep(&label, params, grid, n_d)?;
            for (t, target) in targets.iter().enumerate() {
                match locate_critical(params, &points, *target) {
                    Ok(c) => {
                        series[t].push((*x, c.j_crit));
                        csv.push_str(&format!(
                            "{x},{},{},{:?},{},{}\n",
                            params.n(),
                            params.delta,
                            target.observable,
                            target.value,
                            c.j_crit
                        ));
                        records.push(CriticalRecord::new(
                            &c,
                            params.n(),
                            params.delta,
                            self.config.master_seed,
                        ));
                    }
                    Err(e) => eprintln!("{label} {:?}: {e}", target.observable),
                }
            }
        }
        let mut w = self.create("scaling_points.csv")?;
        w.write_all(csv.as_bytes())?;
        w.flush()?;

        let fixed_slope = if by_size { -1.0 } else { 1.0 };
        let mut fits = Vec::new();
        for (target, pts) in targets.iter().zip(&series) {
            if pts.len() < 2 {
                eprintln!(
                    "{:?}: fewer than two critical points, no fit",
                    target.observable
                );
                continue;
            }
            let fixed: ScalingFit = fit_scaling(pts, FitMode::FixedSlope(fixed_slope))?;
            let free: ScalingFit = fit_scaling(pts, FitMode::Free)?;
            println!(
                "{:?}: coefficient {:.4} (slope fixed at {fixed_slope}); free slope {:.4}",
                target.observable, fixed.coefficient, free.slope
            );
            fits.push(serde_json::json!({
                "target": target,
                "variable": if by_size { "n" } else { "delta" },
                "fixed": fixed,
                "free": free,
            }));
        }
        self.write_json(
            "scaling.json",
            &serde_json::json!({ "records": records, "fits": fits }),
        )?;
        self.finish()
    }

    fn melt(mut self) -> Result<()> {
        let params = self.config.model_params()?;
        let map = melting_map(
            &params,
            &self.config.j_grid,
            self.config.energy_bins,
            self.config.master_seed,
        )?;
        let mut w = self.create("melt.csv")?;
        map.write_csv(&mut w)?;
        w.flush()?;
        println!(
            "melting map: {} couplings x {} energy bins (realization seed {})",
            map.j_values.len(),
            map.n_bins,
            map.seed
        );
        self.finish()
    }
}

/// Reads the manifest a command wrote into `dir`.
pub fn read_manifest(dir: &Path, command: &str) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(format!("{command}.manifest.json")))?;
    Ok(serde_json::from_str(&text)?)
}
