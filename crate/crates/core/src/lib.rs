//! Hybrid projection solver for common solutions of generalized equilibrium
//! problems and fixed points of strict pseudocontractions in Hilbert space.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod cli;
pub mod geometry;
pub mod operators;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{BaseSet, Halfspace, NestedSet, Vector};
pub use operators::{ProblemFamily, PseudoContraction};
pub use solver::{Mode, ParamSchedule, Report, Solver, SolverConfig, StopRule};
