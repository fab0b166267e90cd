use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice geometry {lx}x{ly}: need at least two sites")]
    InvalidGeometry { lx: usize, ly: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("sector for n={n} exceeds the dense capacity cap of {cap} qubits")]
    Capacity { n: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigensolver did not converge (realization seed {seed:?})")]
    Convergence { seed: Option<u64> },

    #[error("window holds {found} levels, at least 3 are needed")]
    InsufficientStatistics { found: usize },

    #[error("all levels in the window are degenerate (mean spacing {mean_spacing:e})")]
    DegenerateWindow { mean_spacing: f64 },

    #[error("spacing statistic is undefined for negative s = {0}")]
    NegativeSpacing(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("observable never crosses {target} on the grid J in [{j_lo}, {j_hi}]")]
    NotBracketed { target: f64, j_lo: f64, j_hi: f64 },

    #[error(
        "critical coupling from level statistics is undefined at delta = 0 \
         (quasidegenerate bands at J = 0)"
    )]
    QuasiDegenerate,

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
