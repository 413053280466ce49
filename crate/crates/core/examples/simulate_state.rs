//! Integrates the stochastic state on a few paths and prints mass and
//! energy along the way; the mass stays fixed to round-off.
//!
//! cargo run --release --example simulate_state

use choc::control::{ControlProcess, Ensemble};
use choc::io::RunConfig;

fn main() -> choc::Result<()> {
    let cfg = RunConfig::default();
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let tg = *solver.time();
    let y0 = cfg.initial_state(&grid)?;
    let u = ControlProcess::zeros(&grid, tg);
    let mut spec = cfg.ensemble_spec()?;
    spec.npaths = 4;
    let ens = Ensemble::new(spec, solver.noise().nmodes(), &tg);
    let trajs = ens.map_paths(|_, wp| solver.solve(&y0, &u, wp))?;
    println!("{:>6} {:>8} {:>14} {:>14}", "step", "time", "mass[0]", "energy[0..4]");
    for n in (0..=tg.nsteps()).step_by(tg.nsteps() / 8) {
        let energies: Vec<String> = trajs.iter().map(|t| format!("{:.4}", t.energy()[n])).collect();
        println!("{n:>6} {:>8.4} {:>14.10} {:>14}", tg.time(n), trajs[0].mass()[n], energies.join(" "));
    }
    for (i, t) in trajs.iter().enumerate() {
        println!("path {i}: seed {:#018x} mass drift {:.2e} max |y| {:.3}", t.wiener().seed(), t.mass_drift(), t.max_abs());
    }
    Ok(())
}
