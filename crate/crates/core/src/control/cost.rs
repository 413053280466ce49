use serde::{Deserialize, Serialize};

use super::ControlProcess;
use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::state::Trajectory;

/// Weights `(α₁, α₂, α₃)` of the tracking, terminal and control-cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl CostWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2), ("alpha3", alpha3)] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("{name} must be nonnegative, got {a}")));
            }
        }
        Ok(Self {
            alpha1,
            alpha2,
            alpha3,
        })
    }
}

/// Targets `x_Q` (one field per time step, paired with `y_0..y_{N−1}`) and `x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTarget {
    pub x_q: Vec<Field>,
    pub x_t: Field,
}

impl TrackingTarget {
    pub fn constant(x_q: &Field, x_t: &Field, nsteps: usize) -> Self {
        Self {
            x_q: vec![x_q.clone(); nsteps],
            x_t: x_t.clone(),
        }
    }

    /// Uses a trajectory's own states as targets.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let states = traj.states();
        Self {
            x_q: states[..states.len() - 1].to_vec(),
            x_t: traj.final_state().clone(),
        }
    }

    pub(crate) fn check(&self, nsteps: usize) -> Result<()> {
        if self.x_q.len() != nsteps {
            return Err(Error::Shape {
                context: "tracking target x_Q",
                expected: nsteps,
                got: self.x_q.len(),
            });
        }
        Ok(())
    }

    /// Residuals `r_n = y_n − x_{Q,n}` for `n < N` followed by `r_N = y_N − x_T`.
    pub(crate) fn residuals(&self, traj: &Trajectory) -> Vec<Field> {
        let n = traj.nsteps();
        let mut r: Vec<Field> = (0..n).map(|i| traj.state(i).sub(&self.x_q[i])).collect();
        r.push(traj.final_state().sub(&self.x_t));
        r
    }
}

/// Per-path cost
/// `(α₁/2) Σ_n τ‖y_n − x_{Q,n}‖² + (α₂/2)‖y_N − x_T‖² + (α₃/2) Σ_n τ‖u_n‖²`,
/// with the tracking sum over `n = 0..N−1`.
pub fn evaluate_cost(
    traj: &Trajectory,
    u: &ControlProcess,
    target: &TrackingTarget,
    weights: &CostWeights,
) -> Result<f64> {
    let n = traj.nsteps();
    target.check(n)?;
    if u.len() != n {
        return Err(Error::Shape {
            context: "control in cost",
            expected: n,
            got: u.len(),
        });
    }
    let tau = traj.time().tau();
    let tracking: f64 = (0..n)
        .map(|i| {
            let d = traj.state(i).sub(&target.x_q[i]);
            tau * grid::inner_h(&d, &d)
        })
        .sum();
    let terminal = {
        let d = traj.final_state().sub(&target.x_t);
        grid::inner_h(&d, &d)
    };
    Ok(0.5 * weights.alpha1 * tracking
        + 0.5 * weights.alpha2 * terminal
        + 0.5 * weights.alpha3 * u.inner(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::physics::{NoiseModel, Potential};
    use crate::state::{StateSolver, TimeGrid, WienerPath};

    fn run(u: &ControlProcess) -> Trajectory {
        let g = u.grid().clone();
        let solver = StateSolver::new(&g, Potential::double_well(), NoiseModel::none(&g), *u.time(), 2.0).unwrap();
        solver
            .solve(&Field::cosine_mode(&g, &[1]).scaled(0.2), u, &WienerPath::zero(0, u.time()))
            .unwrap()
    }

    #[test]
    fn perfect_tracking_costs_nothing() {
        let g = Grid::line(16, 1.0).unwrap();
        let tg = TimeGrid::new(0.01, 10).unwrap();
        let u = ControlProcess::zeros(&g, tg);
        let traj = run(&u);
        let target = TrackingTarget::from_trajectory(&traj);
        let w = CostWeights::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(evaluate_cost(&traj, &u, &target, &w).unwrap(), 0.0);
    }

    #[test]
    fn control_term_quadrature() {
        let g = Grid::line(16, 1.0).unwrap();
        let tg = TimeGrid::new(0.3, 12).unwrap();
        let u = ControlProcess::constant_in_time(&Field::constant(&g, 1.0), tg);
        let traj = run(&u);
        let target = TrackingTarget::constant(&Field::zeros(&g), &Field::zeros(&g), 12);
        let w = CostWeights::new(0.0, 0.0, 1.0).unwrap();
        assert!((evaluate_cost(&traj, &u, &target, &w).unwrap() - 0.3 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn matches_independent_quadrature() {
        let g = Grid::line(16, 2.0).unwrap();
        let tg = TimeGrid::new(0.02, 8).unwrap();
        let u = ControlProcess::from_fn(&g, tg, |t, x| (3.0 * x[0]).sin() + 10.0 * t);
        let traj = run(&u);
        let xq = Field::from_fn(&g, |x| x[0] * 0.1);
        let xt = Field::constant(&g, 0.05);
        let target = TrackingTarget::constant(&xq, &xt, 8);
        let w = CostWeights::new(0.7, 1.3, 0.4).unwrap();
        let h = 2.0 / 16.0;
        let tau = 0.02 / 8.0;
        let mut oracle = 0.0;
        for n in 0..8 {
            for i in 0..16 {
                let d = traj.state(n).values()[i] - xq.values()[i];
                oracle += 0.5 * 0.7 * tau * h * d * d;
                let c = u.field(n).values()[i];
                oracle += 0.5 * 0.4 * tau * h * c * c;
            }
        }
        for i in 0..16 {
            let d = traj.final_state().values()[i] - 0.05;
            oracle += 0.5 * 1.3 * h * d * d;
        }
        let got = evaluate_cost(&traj, &u, &target, &w).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn weights_must_be_nonnegative() {
        assert!(CostWeights::new(-1.0, 0.0, 0.0).is_err());
        assert!(CostWeights::new(0.0, 0.0, f64::NAN).is_err());
    }
}
