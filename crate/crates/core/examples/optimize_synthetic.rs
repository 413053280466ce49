//! Projected gradient descent on an attainable tracking problem whose
//! targets come from a reference control on the same noise paths.
//!
//! cargo run --release --example optimize_synthetic

use choc::control::ControlProcess;
use choc::io::RunConfig;
use choc::verify::synthetic_problem;

fn main() -> choc::Result<()> {
    let cfg = RunConfig::default();
    let (problem, ens) = synthetic_problem(&cfg)?;
    let u0 = ControlProcess::zeros(problem.solver().grid(), *problem.solver().time());
    let result = problem.optimize(&u0, &ens, &cfg.optimizer)?;
    println!("{:>5} {:>14} {:>14}", "iter", "cost", "gradient map");
    for (k, (c, g)) in result.cost_history.iter().zip(&result.gradient_map_history).enumerate() {
        if k < 10 || k % 10 == 0 || k == result.iterations {
            println!("{k:>5} {c:>14.6e} {g:>14.6e}");
        }
    }
    println!("termination {:?}: {}", result.termination, result.message);
    println!(
        "cost reduced {:.1}x, stationarity residual {:.2e}, |u| = {:.4}",
        result.cost_history[0] / result.final_cost,
        result.projection_residual,
        result.control_norm
    );
    Ok(())
}
