//! Numerical verification: conservation, differentiability, duality,
//! gradient exactness, continuous dependence, truncation convergence and
//! moment bounds. Every check returns a [`CheckReport`] whose pass flag is a
//! function of its measured values and tolerances, and every check has a
//! deliberately broken counterpart in the suite that must fail.

mod checks;
mod random;
mod report;
mod suite;

pub use checks::*;
pub use random::SmoothRandom;
pub use report::{fitted_order, CheckReport, ConvergenceTable, SuiteReport, TableRow};
pub use suite::{run_check, run_suite, synthetic_problem, CHECK_NAMES, LOUD_NOISE, SYNTHETIC_WEIGHTS};
