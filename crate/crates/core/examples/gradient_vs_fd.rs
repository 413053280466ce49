//! Adjoint gradient of the Monte Carlo reduced cost against central
//! differences taken with the same noise paths.
//!
//! cargo run --release --example gradient_vs_fd

use choc::control::{ControlProblem, Ensemble, Targets, TrackingTarget};
use choc::grid::Field;
use choc::io::RunConfig;
use choc::verify::SmoothRandom;

fn main() -> choc::Result<()> {
    let cfg = RunConfig::default();
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let tg = *solver.time();
    let target = TrackingTarget::constant(&Field::cosine_mode(&grid, &[1]).scaled(0.2), &Field::zeros(&grid), tg.nsteps());
    let problem = ControlProblem::new(solver.clone(), cfg.initial_state(&grid)?, cfg.weights()?, Targets::Shared(target), cfg.control.radius)?;
    let ens = Ensemble::new(cfg.ensemble_spec()?, solver.noise().nmodes(), &tg);
    let u = SmoothRandom::keyed(3, 0, 1, 4, 3, 0.5).control(&grid, tg);
    let h = SmoothRandom::keyed(3, 1, 1, 4, 3, 1.0).control(&grid, tg);
    let exact = problem.gradient(&u, &ens)?.inner(&h);
    println!("adjoint directional derivative {exact:.12e}");
    println!("{:>8} {:>20} {:>10}", "eps", "central difference", "rel err");
    for eps in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
        let plus = problem.reduced_cost(&u.add(&h.scaled(eps)), &ens)?.mean;
        let minus = problem.reduced_cost(&u.sub(&h.scaled(eps)), &ens)?.mean;
        let fd = (plus - minus) / (2.0 * eps);
        println!("{eps:>8.0e} {fd:>20.12e} {:>10.2e}", (fd - exact).abs() / exact.abs());
    }
    Ok(())
}
