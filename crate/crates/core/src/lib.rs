//! Stochastic Cahn–Hilliard optimal control on a box with Neumann boundary
//! conditions: spectral grid operators, a semi-implicit Euler–Maruyama state
//! solver, linearised and adjoint sensitivities, Monte Carlo projected gradient
//! descent and numerical verification checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod grid;
pub mod io;
pub mod physics;
pub mod sensitivity;
pub mod state;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
