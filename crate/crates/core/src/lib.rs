//! Safe Frank-Wolfe optimization over a polytope that is only observable
//! through noisy feasibility measurements.
//!
//! The crate is organised bottom-up: [`geometry`] holds exact polytope
//! machinery, [`oracles`] simulates the measurement and gradient oracles,
//! [`estimation`] learns the constraints and tracks the confidence constants,
//! [`gradient`] implements the recursive-momentum estimator, [`solver`] runs
//! the main loop and [`harness`] drives experiments from the command line.

pub mod error;
pub mod estimation;
pub mod geometry;
pub mod gradient;
pub mod harness;
pub mod linalg;
pub mod oracles;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{GeometrySummary, Polytope};
pub use solver::{RunConfig, Variant};
