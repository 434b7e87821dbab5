//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Geometry that makes an angle or direction map undefined, e.g. the UE
    /// coinciding with the BS or a RIS, or a direction-cosine pair outside
    /// the unit ball beyond tolerance.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("array size {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Raw-slot simulation requires at least D pilot slots.
    #[error("invalid pilot: T = {t_slots} is smaller than D = {n_ue}")]
    InvalidPilot { t_slots: usize, n_ue: usize },

    #[error("ill-conditioned system: condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// Fewer spectrum peaks found than paths expected.
    #[error("peak deficit: found {found} peaks, need {needed}")]
    PeakDeficit { found: usize, needed: usize },

    #[error("noise subspace empty: {side} antennas per axis cannot resolve {paths} paths")]
    SubspaceTooSmall { side: usize, paths: usize },

    #[error("Fisher information matrix is singular")]
    SingularFim,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
