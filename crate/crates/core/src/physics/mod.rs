//! Double-well potential with its truncations, and the finite-rank noise operator.

mod noise;
mod potential;

pub use noise::{ModeSpec, NoiseKind, NoiseModel, NoiseOverrides, NoiseShape};
pub use potential::{
    AssumptionReport, AssumptionViolation, Inequality, Margin, Order, Potential, TruncationLevel,
};
