use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Inconsistent problem configuration (catalog parameters, grid alignment, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Two objects that must share a grid or a mode count do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A per-mode Gramian is too ill-conditioned to invert safely.
    #[error("Gramian of mode {mode} is ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { mode: usize, cond: f64 },

    /// A Picard iteration did not reach its tolerance.
    #[error("Picard iteration did not converge after {iterations} iterations (last difference {last_diff:.3e}, contraction ratio {ratio:.4})")]
    NonConvergence {
        iterations: usize,
        last_diff: f64,
        ratio: f64,
    },

    /// Successive differences kept growing.
    #[error("fixed-point iteration diverged at iteration {iteration} (successive-difference ratio {ratio:.4})")]
    Divergence { iteration: usize, ratio: f64 },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. } | Error::NonConvergence { .. } | Error::Divergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
