//! Dense complex linear algebra for multi-register quantum systems.
//!
//! Everything in this module is register-aware: vectors and operators carry
//! the list of subsystem dimensions they act on, so composition (tensor
//! products), reduction (partial traces) and targeted operator application
//! never need manual index bookkeeping at call sites.

mod density;
mod index;
mod metrics;
mod op;
mod state;

pub use density::DensityOperator;
pub use index::{compose_index, decompose_index, strides};
pub use metrics::{fidelity, purify, trace_distance, uhlmann_unitary, UhlmannAligner, UhlmannResult};
pub use op::{ComplexOperator, C64};
pub use state::StateVector;

/// Tolerance used by constructors when validating norms, traces and
/// Hermiticity.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Eigenvalues below this are clamped to zero before logarithms and square
/// roots, so `0 log 0 = 0` and PSD square roots never see negative inputs.
pub const EIG_CLAMP: f64 = 1e-12;
