//! Consistent initial conditions of singular linear-quadratic optimal
//! control problems.
//!
//! [`constraint_algorithm::run`] computes the constraint matrix `Φ` whose
//! kernel is the final constraint submanifold, together with the recursive
//! index (number of steps). [`linear_dae`] holds the analogous chain for
//! implicit systems `A·ẋ = B·x`, [`closed_form`] the explicit formulas for
//! the constraint blocks and [`experiments`] the perturbation studies.

pub mod closed_form;
pub mod constraint_algorithm;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod linear_dae;
pub mod lq_problem;
pub mod subspace_geometry;

pub use constraint_algorithm::{
    final_submanifold, run, run_with, AlgorithmResult, ConstraintBlock, ConstraintMatrix, HaltReason, Options,
    Recursion,
};
pub use error::{Error, Result};
pub use linalg::RankRule;
pub use linear_dae::{LinearDae, WeierstrassSpec};
pub use lq_problem::{CostateTriple, LqProblem};
pub use subspace_geometry::Subspace;

pub use nalgebra;
