//! Exact rational linear algebra used as an independent reference for the
//! floating-point constraint algorithm.
//!
//! Nothing here shares code with `singular-lq`: matrices are dense
//! `BigRational` arrays, ranks and kernels come from fraction-exact
//! Gauss-Jordan elimination, and the constraint chain is computed directly
//! from its geometric definition on the extended `(x, p, u)` system.

mod chain;
mod matrix;
mod poly;

pub use chain::{dae_chain, lq_chain, lq_dynamics, lq_hamiltonian, DaeChain, LqChain};
pub use matrix::{QMatrix, Rat};
pub use poly::{pencil_determinant, Poly};
