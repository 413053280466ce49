//! The transpose adjoint reproduces the tangent pairing exactly on each
//! path; the continuous backend agrees only up to the step size.
//!
//! cargo run --release --example duality_check

use choc::control::{ControlProcess, CostWeights, TrackingTarget};
use choc::grid::Field;
use choc::io::RunConfig;
use choc::physics::TruncationLevel;
use choc::sensitivity::{solve_adjoint, AdjointBackend};
use choc::state::WienerPath;
use choc::verify::{duality_sides, SmoothRandom};

fn main() -> choc::Result<()> {
    let cfg = RunConfig::default();
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let tg = *solver.time();
    let y0 = cfg.initial_state(&grid)?;
    let u = SmoothRandom::keyed(1, 0, 1, 4, 3, 0.5).control(&grid, tg);
    let target = TrackingTarget::constant(&Field::cosine_mode(&grid, &[2]).scaled(0.3), &Field::zeros(&grid), tg.nsteps());
    let weights = CostWeights::new(1.0, 1.0, 0.0)?;
    println!("{:>5} {:>20} {:>22} {:>22} {:>10}", "path", "backend", "<h, p~>", "tracking pairing", "rel gap");
    for path in 0..4u64 {
        let wp = WienerPath::sample(solver.noise().nmodes(), &tg, cfg.ensemble_spec()?.seed(path as usize));
        let traj = solver.solve(&y0, &u, &wp)?;
        let h: ControlProcess = SmoothRandom::keyed(2, path, 1, 4, 3, 1.0).control(&grid, tg);
        for backend in [AdjointBackend::DiscreteTranspose, AdjointBackend::Continuous] {
            let adj = solve_adjoint(&solver, &traj, &target, &weights, backend, TruncationLevel::NONE)?;
            let (lhs, rhs) = duality_sides(&solver, &traj, &target, &weights, &adj.p_tilde, &h)?;
            let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
            println!("{path:>5} {:>20} {lhs:>22.14e} {rhs:>22.14e} {gap:>10.2e}", format!("{backend:?}"));
        }
    }
    Ok(())
}
