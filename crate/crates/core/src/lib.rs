//! Inertial iterated Tikhonov regularization for linear ill-posed problems.
//!
//! The crate provides matrix-free operators ([`linop`]), inner solvers for
//! the Tikhonov subproblem ([`inner_solve`]), the outer iteration engine
//! with the inertial method and its baselines ([`iterate`]), benchmark
//! problems ([`problems`]), numerical checks of the method's identities and
//! convergence properties ([`diagnostics`]), and an experiment runner
//! ([`cli`]).

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod inner_solve;
pub mod iterate;
pub mod linop;
pub mod problems;
pub mod vector;

pub use error::{Error, Result};
pub use grid::Grid;
pub use iterate::{IterationTrace, Method, SolverConfig};
pub use linop::LinearOperator;
pub use problems::Problem;
