use serde::{Deserialize, Serialize};

use super::{ControlProblem, ControlProcess, Ensemble};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Stop when the gradient-map norm drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    /// First trial step of every line search; also the step of the gradient map.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition.
    Stalled,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    #[serde(skip)]
    pub control: ControlProcess,
    pub iterations: usize,
    /// Reduced cost at every accepted iterate, starting with `u0`.
    pub cost_history: Vec<f64>,
    /// `‖u − P(u − η₀ ∇J̃)‖ / η₀` at every accepted iterate.
    pub gradient_map_history: Vec<f64>,
    /// Accepted step sizes.
    pub step_history: Vec<f64>,
    pub final_cost: f64,
    pub final_cost_stderr: f64,
    /// Stationarity residual at the final iterate (see [`ControlProblem::optimality_residual`]).
    pub projection_residual: f64,
    pub control_norm: f64,
    /// Monitored, not constrained.
    pub control_gradient_seminorm: f64,
    pub termination: Termination,
    pub message: String,
}

impl OptimizationResult {
    pub fn cost_is_monotone(&self, tol: f64) -> bool {
        self.cost_history.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

impl ControlProblem {
    /// Projected gradient descent with Armijo backtracking on the
    /// common-random-number reduced cost.
    pub fn optimize(
        &self,
        u0: &ControlProcess,
        ensemble: &Ensemble,
        opts: &OptimizerOptions,
    ) -> Result<OptimizationResult> {
        let eta0 = opts.initial_step;
        let mut u = self.project(u0);
        let (mut cost, mut grad) = self.cost_and_gradient(&u, ensemble)?;
        let mut cost_history = vec![cost.mean];
        let mut gradient_map_history = Vec::new();
        let mut step_history = Vec::new();
        let mut iterations = 0;
        let termination;
        let message;
        loop {
            let gmap = u.sub(&self.project(&u.sub(&grad.scaled(eta0)))).norm() / eta0;
            gradient_map_history.push(gmap);
            if gmap <= opts.tol {
                termination = super::Termination::Converged;
                message = format!("gradient map {gmap:e} <= tol {:e}", opts.tol);
                break;
            }
            if iterations >= opts.max_iter {
                termination = super::Termination::MaxIterations;
                message = format!("gradient map {gmap:e} > tol {:e} after {iterations} iterations", opts.tol);
                break;
            }
            let mut eta = eta0;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let trial = self.project(&u.sub(&grad.scaled(eta)));
                let decrease = grad.inner(&trial.sub(&u));
                let trial_cost = self.reduced_cost(&trial, ensemble)?;
                if trial_cost.mean <= cost.mean + opts.armijo_c * decrease {
                    accepted = Some(trial);
                    break;
                }
                eta *= opts.shrink;
            }
            let Some(next) = accepted else {
                termination = super::Termination::Stalled;
                message = format!(
                    "line search failed after {} backtracks at iteration {iterations} (gradient map {gmap:e})",
                    opts.max_backtracks
                );
                break;
            };
            u = next;
            (cost, grad) = self.cost_and_gradient(&u, ensemble)?;
            cost_history.push(cost.mean);
            step_history.push(eta);
            iterations += 1;
        }
        let p_bar = {
            let mut p = grad.clone();
            p.axpy(-self.weights().alpha3, &u);
            p
        };
        let projection_residual = self.optimality_residual_from(&u, &p_bar);
        Ok(OptimizationResult {
            iterations,
            cost_history,
            gradient_map_history,
            step_history,
            final_cost: cost.mean,
            final_cost_stderr: cost.stderr,
            projection_residual,
            control_norm: u.norm(),
            control_gradient_seminorm: u.gradient_seminorm(),
            termination,
            message,
            control: u,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{CostWeights, EnsembleSpec, Targets, TrackingTarget};
    use crate::grid::{Field, Grid};
    use crate::physics::{NoiseModel, Potential};
    use crate::state::{StateSolver, TimeGrid};

    fn pure_control_problem() -> (ControlProblem, Ensemble, ControlProcess) {
        let g = Grid::line(16, 1.0).unwrap();
        let tg = TimeGrid::new(0.01, 10).unwrap();
        let solver = StateSolver::new(&g, Potential::double_well(), NoiseModel::none(&g), tg, 2.0).unwrap();
        let target = TrackingTarget::constant(&Field::zeros(&g), &Field::zeros(&g), 10);
        let p = ControlProblem::new(solver, Field::zeros(&g), CostWeights::new(0.0, 0.0, 1.0).unwrap(), Targets::Shared(target), 10.0).unwrap();
        let ens = Ensemble::new(EnsembleSpec::new(2, 1).unwrap(), 0, &tg);
        let u0 = ControlProcess::from_fn(&g, tg, |t, x| 5.0 * x[0] - 100.0 * t);
        (p, ens, u0)
    }

    #[test]
    fn pure_control_cost_contracts_to_zero() {
        let (p, ens, u0) = pure_control_problem();
        let opts = OptimizerOptions { initial_step: 0.5, ..Default::default() };
        let res = p.optimize(&u0, &ens, &opts).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        assert!(res.control.norm() <= 1e-6);
        assert!(res.cost_is_monotone(0.0));
        assert!(res.projection_residual <= 1e-6);
    }

    #[test]
    fn huge_tolerance_returns_start() {
        let (p, ens, u0) = pure_control_problem();
        let res = p.optimize(&u0, &ens, &OptimizerOptions { tol: 1e300, ..Default::default() }).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.termination, Termination::Converged);
        assert_eq!(res.control, u0);
    }

    #[test]
    fn zero_backtracks_with_bad_step_stalls() {
        let (p, ens, u0) = pure_control_problem();
        let opts = OptimizerOptions { initial_step: 2.5, max_backtracks: 0, ..Default::default() };
        let res = p.optimize(&u0, &ens, &opts).unwrap();
        assert_eq!(res.termination, Termination::Stalled);
        assert!(!res.message.is_empty());
    }
}
