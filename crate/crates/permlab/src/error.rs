//! Error type shared by all permlab operations.

use thiserror::Error;

/// Errors produced by construction, validation, and numerical routines.
///
/// Numerical *non-convergence* of the fixed-point solver itself is
/// deliberately not an error: `solve_el` returns a report with a `converged`
/// flag, so callers can inspect partial results. Only derived quantities
/// that are meaningless without a converged solve (free energies, tilts,
/// conditioned optimizers) surface it as [`Error::NonConvergence`].
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or malformed object (bad densities, weights, ranges,
    /// non-bijective permutations, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two measures whose representations cannot be compared structurally
    /// (e.g. a grid against a segment measure, or grid resolutions whose
    /// least common multiple exceeds the refinement cap).
    #[error("incompatible representations: {0}")]
    Incompatible(String),

    /// An exact evaluation that is not implemented for the requested
    /// pattern/representation combination; the Monte Carlo path
    /// (`t_sigma_measure_mc`) is always available.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// Tied x or y coordinates in a point configuration. Under a measure
    /// with continuous marginals ties have probability zero, so a tie in
    /// floating point is treated as a hard error rather than broken
    /// silently.
    #[error("tied coordinates in point configuration")]
    TiedCoordinates,

    /// The sampler kept drawing exact floating-point coordinate collisions
    /// and ran out of retries (pathological input).
    #[error("sampling retry budget exhausted")]
    SamplingExhausted,

    /// The requested pattern density `delta` is not attainable within the
    /// solver's tilt range; reports the bracket that was reached.
    #[error("target density {delta} unattainable: reached t = {t_reached} at tilt {theta_reached}")]
    DeltaUnattainable {
        delta: f64,
        theta_reached: f64,
        t_reached: f64,
    },

    /// A derived quantity needed a converged fixed point, but no start
    /// converged within the iteration budget at this tilt.
    #[error("fixed-point solver did not converge at tilt {theta}")]
    NonConvergence { theta: f64 },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
