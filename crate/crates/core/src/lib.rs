//! Spectral Galerkin toolkit for steering a damped, cable-supported beam
//! with delays, impulses and nonlocal initial conditions.
//!
//! States live on the first `N` modes of the hinged beam operator. The
//! linear part is propagated exactly mode by mode, controls are piecewise
//! linear in time, and the nonlinear mild solution is advanced with an
//! exponential trapezoid rule.

// `!(x > 0.0)` style guards reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod controllability;
pub mod dynamics;
pub mod error;
pub mod semigroup;
pub mod spectral;
pub mod synthesis;

pub use control::{ControlSignal, Side};
pub use controllability::{GramianOptions, GramianSet};
pub use dynamics::{ProblemSpec, Segment, Trajectory};
pub use error::{Error, Result};
pub use semigroup::{Mode2x2, ModelParams, NormBound};
pub use spectral::{ModalCoeffs, SpatialGrid, StateZ};
pub use synthesis::{ApproxResult, ContractionReport, ExactResult};
