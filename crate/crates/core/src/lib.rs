//! Robust control-pulse design for quantum gates.
//!
//! Controls are truncated Fourier series; gradients of gate-fidelity costs are
//! obtained from an adjoint (back-propagated) state, and robustness over a set
//! of uncertain system parameters is achieved by minimizing a smoothed maximum
//! of the per-parameter costs under amplitude bounds.

pub mod baselines;
pub mod checks;
pub mod control;
pub mod error;
pub mod linalg;
pub mod minimax;
pub mod objective;
pub mod optim;
pub mod propagator;
pub mod system;

pub use error::{Error, Result};
