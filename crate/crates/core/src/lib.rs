//! Balanced random walks in random environments: lattice operators, exact
//! solvers, Monte Carlo estimators, discrete convexity tools and the rate
//! experiments built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod convexity;
pub mod effective;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod rng;
pub mod solver;
pub mod walk;

pub use error::{Error, Result};
