//! Numerical laboratory for quantum linear-system solvers of the HHL family.
//!
//! Three algorithms share one circuit skeleton (ancilla, clock register,
//! solution register) and differ in the clock preparation and the final
//! postselection: the original algorithm with a sine-profile clock, a common
//! variant with a uniform clock that postselects the ancilla alone, and an
//! improved variant that postselects the ancilla together with the zero
//! clock state. The crate computes their output states two independent ways,
//! by exact statevector simulation of the circuit stages and by closed-form
//! spectral coefficients, and cross-validates the two against each other.

pub mod bounds;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod experiments;
pub mod params;
pub mod problem;
pub mod simulator;

pub use error::{Error, Result};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
