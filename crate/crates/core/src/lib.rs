//! Mixed-integer optimal control of 1D semilinear hyperbolic systems.
//!
//! The pipeline: relax the integer mode choice into simplex-valued weights,
//! solve the relaxed problem with a projected-gradient method driven by an
//! adjoint gradient, then recover a binary mode schedule by sum-up rounding,
//! whose integrated control deviation bounds the state and cost gap.
//!
//! Two forward solvers cross-check each other: an upwind finite-volume
//! scheme with implicit source treatment, and a characteristic fixed-point
//! iteration that follows the transport curves backwards and integrates the
//! source along them.

pub mod adjoint;
pub mod burgers;
pub mod characteristics;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod fv;
pub mod grid;
pub mod io;
pub mod norms;
pub mod optimizer;
pub mod rounding;
pub mod system;
pub mod trajectory;

pub use error::{Error, Result};
