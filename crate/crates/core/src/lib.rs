//! Modeling probability distributions over rankings with riffled independence.
//!
//! The crate is organized around five layers:
//!
//! - [`perm`]: exact combinatorics of rankings — composition, inversion,
//!   Lehmer indexing, interleavings and relative-rank maps.
//! - [`dense`]: exact distributions over all `n!` rankings, the brute-force
//!   oracle everything else is tested against.
//! - [`model`]: riffle independent and hierarchical riffle independent models
//!   (sampling, evaluation, MLE fitting, inference decompositions).
//! - [`fourier`]: Fourier analysis on the symmetric group at small `n`,
//!   including the dynamic-programming transform of riffle shuffling
//!   distributions and Fourier-domain join/split.
//! - [`learn`]: structure discovery from ranking data via triplet
//!   mutual-information objectives, plus bootstrap stability reporting.
//!
//! File formats and dataset helpers live in [`io`].

pub mod dense;
pub mod fourier;
pub mod io;
pub mod learn;
pub mod model;
pub mod perm;

pub use dense::{DenseDistribution, FirstOrderMatrix, SampleSet};
pub use fourier::{FourierCoefficients, PartitionLabel};
pub use learn::{LearnedHierarchy, TripletMITensor};
pub use model::{HierarchicalModel, InterleavingDistribution, InterleavingKind, TreeShape};
pub use perm::{ItemPartition, Interleaving, Ranking};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("index {idx} out of range for n={n} ({max} elements)")]
    IndexOutOfRange { n: usize, idx: u64, max: u64 },
    #[error("enumeration over S_{n} refused: n exceeds the cap of {cap} (set RIFFLE_MAX_N to override)")]
    EnumerationCap { n: usize, cap: usize },
    #[error("empty sample set")]
    EmptySamples,
    #[error("conditioning evidence has zero probability under the prior")]
    ZeroEvidence,
    #[error("non-decomposable observation: items {i} and {j} straddle a split; no structure-preserving update exists (use the dense fallback)")]
    NonDecomposable { i: usize, j: usize },
    #[error("frequency level mismatch: {0}")]
    LevelMismatch(String),
    #[error("missing Fourier levels for order-{order} reconstruction: {missing}")]
    MissingLevels { order: usize, missing: String },
    #[error("table for {what} would need {size} entries, beyond the cap of {cap}")]
    TableCap { what: String, size: u64, cap: u64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model document: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
