//! Forward integration of the controlled stochastic Cahn–Hilliard system.

mod solver;
mod wiener;

pub use solver::{chemical_potential, energy, StateSolver, Trajectory, BLOW_UP_LIMIT};
pub use wiener::{path_seed, splitmix64, TimeGrid, WienerPath};
