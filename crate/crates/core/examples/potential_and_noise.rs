//! The double-well potential, its truncated curvature, and the action of
//! additive and multiplicative noise on a state.
//!
//! cargo run --release --example potential_and_noise

use choc::grid::{self, Field, Grid};
use choc::physics::{ModeSpec, NoiseKind, NoiseModel, NoiseOverrides, NoiseShape, Potential, TruncationLevel};

fn main() -> choc::Result<()> {
    let pot = Potential::double_well();
    let clamp = TruncationLevel::new(2.0)?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "r", "psi", "psi'", "psi''", "clamped");
    for r in [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5] {
        println!(
            "{r:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            pot.psi(r),
            pot.psi_prime(r),
            pot.psi_second(r),
            pot.psi_second_truncated(r, clamp)
        );
    }
    let report = pot.validate_assumptions((-10.0, 10.0), 10_001)?;
    println!("growth and convexity bounds on [-10, 10]: {:?}", report.worst_violation());

    let g = Grid::line(64, 1.0)?;
    let modes = [ModeSpec::new(&[1], 0.2), ModeSpec::new(&[2], 0.1)];
    let y = Field::from_fn(&g, |x| 0.3 + 0.8 * (std::f64::consts::PI * x[0]).cos());
    for kind in [NoiseKind::Additive, NoiseKind::Multiplicative] {
        let noise = NoiseModel::new(&g, kind, NoiseShape::Tanh, &modes, NoiseOverrides::default())?;
        let kick = noise.apply_b(&y, &[0.05, -0.02])?;
        println!(
            "{kind:?}: |B(y)dW|_H = {:.4e}, mean = {:.1e}, mean free: {}",
            grid::norm_h(&kick),
            grid::mean(&kick),
            noise.is_mean_free()
        );
    }
    Ok(())
}
