//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A grid was constructed with parameters outside the supported range.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A run or operation was configured inconsistently.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Config-file parse problem, with the 1-based line number.
    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    /// The explicit time step violates the stability bound.
    #[error("CFL violation: dt = {dt} exceeds {max} (0.5 h) for h = {h}")]
    Cfl { dt: f64, h: f64, max: f64 },

    /// The grid does not contain the light cone at the final time.
    #[error("domain too small: half-extent {extent} < t_final + 1 = {required}")]
    DomainTooSmall { extent: f64, required: f64 },

    /// A non-finite value appeared during evolution.
    #[error("non-finite value in field `{field}` at t = {t}, node ({i}, {j})")]
    NonFinite { field: &'static str, t: f64, i: usize, j: usize },

    /// A hyperboloid slice requested data outside the slab window.
    #[error("slab coverage gap: slice s = {s} needs t in [{t_lo}, {t_hi}], slab covers [{have_lo}, {have_hi}]")]
    SlabCoverage { s: f64, t_lo: f64, t_hi: f64, have_lo: f64, have_hi: f64 },

    /// A derivative word longer than the supported length was requested.
    #[error("vector-field word of length {len} requested; supported length is <= 2")]
    WordTooLong { len: usize },

    /// Snapshot serialization problems.
    #[error("snapshot: {0}")]
    Snapshot(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
