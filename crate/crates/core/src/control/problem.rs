use serde::Serialize;

use super::ensemble::{mean_and_stderr, pairwise_reduce};
use super::{evaluate_cost, ControlProcess, CostWeights, Ensemble, TrackingTarget};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::physics::TruncationLevel;
use crate::sensitivity::{solve_adjoint, AdjointBackend};
use crate::state::{StateSolver, Trajectory};

/// Tracking targets, either shared by every path or one per path.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Shared(TrackingTarget),
    PerPath(Vec<TrackingTarget>),
}

impl Targets {
    pub fn for_path(&self, i: usize) -> &TrackingTarget {
        match self {
            Targets::Shared(t) => t,
            Targets::PerPath(ts) => &ts[i],
        }
    }

    /// Per-path targets obtained by simulating the reference control on each
    /// of the ensemble's own paths, so the targets are exactly attainable.
    pub fn synthetic(
        solver: &StateSolver,
        y0: &Field,
        reference: &ControlProcess,
        ensemble: &Ensemble,
    ) -> Result<Self> {
        let targets = ensemble.map_paths(|_, wp| {
            solver
                .solve(y0, reference, wp)
                .map(|t| TrackingTarget::from_trajectory(&t))
        })?;
        Ok(Targets::PerPath(targets))
    }
}

/// Monte Carlo estimate of the reduced cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// The finite-ensemble optimal control problem: minimise the mean of the
/// per-path cost over deterministic controls in the `L²(Q)` ball of radius `C0`.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    solver: StateSolver,
    y0: Field,
    weights: CostWeights,
    targets: Targets,
    radius: f64,
    truncation: TruncationLevel,
}

impl ControlProblem {
    pub fn new(
        solver: StateSolver,
        y0: Field,
        weights: CostWeights,
        targets: Targets,
        radius: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!(
                "admissible radius C0 must be positive, got {radius}"
            )));
        }
        let n = solver.time().nsteps();
        match &targets {
            Targets::Shared(t) => t.check(n)?,
            Targets::PerPath(ts) => ts.iter().try_for_each(|t| t.check(n))?,
        }
        Ok(Self {
            solver,
            y0,
            weights,
            targets,
            radius,
            truncation: TruncationLevel::NONE,
        })
    }

    pub fn with_truncation(mut self, truncation: TruncationLevel) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn solver(&self) -> &StateSolver {
        &self.solver
    }

    pub fn y0(&self) -> &Field {
        &self.y0
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn truncation(&self) -> TruncationLevel {
        self.truncation
    }

    fn check_ensemble(&self, ensemble: &Ensemble) -> Result<()> {
        if let Targets::PerPath(ts) = &self.targets {
            if ts.len() != ensemble.len() {
                return Err(Error::Shape {
                    context: "per-path targets",
                    expected: ensemble.len(),
                    got: ts.len(),
                });
            }
        }
        Ok(())
    }

    /// State trajectories of every path under control `u`.
    pub fn trajectories(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<Vec<Trajectory>> {
        self.check_ensemble(ensemble)?;
        ensemble.map_paths(|_, wp| self.solver.solve(&self.y0, u, wp))
    }

    fn costs(&self, u: &ControlProcess, trajs: &[Trajectory]) -> Result<Vec<f64>> {
        trajs
            .iter()
            .enumerate()
            .map(|(i, t)| evaluate_cost(t, u, self.targets.for_path(i), &self.weights))
            .collect()
    }

    /// `J̃(u)` averaged over the ensemble, with its standard error.
    pub fn reduced_cost(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<CostEstimate> {
        let trajs = self.trajectories(u, ensemble)?;
        let (mean, stderr) = mean_and_stderr(&self.costs(u, &trajs)?);
        Ok(CostEstimate { mean, stderr })
    }

    fn check_gradient_domain(&self, u: &ControlProcess) -> Result<()> {
        let norm = u.norm();
        if norm >= 2.0 * self.radius {
            return Err(Error::Domain(format!(
                "gradient requested at ‖u‖ = {norm} outside the open ball of radius 2 C0 = {}",
                2.0 * self.radius
            )));
        }
        Ok(())
    }

    /// Per-path adjoint fields `p̃_0..p̃_{N−1}` (discrete-transpose backend).
    fn adjoint_paths(&self, trajs: &[Trajectory]) -> Result<Vec<ControlProcess>> {
        let time = *self.solver.time();
        let results: Vec<Result<ControlProcess>> = {
            use rayon::prelude::*;
            trajs
                .par_iter()
                .enumerate()
                .map(|(i, t)| {
                    let adj = solve_adjoint(
                        &self.solver,
                        t,
                        self.targets.for_path(i),
                        &self.weights,
                        AdjointBackend::DiscreteTranspose,
                        self.truncation,
                    )?;
                    ControlProcess::from_fields(time, adj.control_gradient().to_vec())
                })
                .collect()
        };
        super::ensemble::collect_paths(results)
    }

    /// Ensemble mean of `p̃` over the control steps.
    pub fn mean_adjoint(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<ControlProcess> {
        let trajs = self.trajectories(u, ensemble)?;
        self.mean_adjoint_from(&trajs)
    }

    fn mean_adjoint_from(&self, trajs: &[Trajectory]) -> Result<ControlProcess> {
        let per_path = self.adjoint_paths(trajs)?;
        let sum = pairwise_reduce(&per_path, &|a, b| a.add(b)).expect("ensemble is nonempty");
        Ok(sum.scaled(1.0 / per_path.len() as f64))
    }

    /// Exact `L²(Q)` gradient of the finite-ensemble reduced cost:
    /// `mean(p̃) + α₃ u`.
    pub fn gradient(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<ControlProcess> {
        Ok(self.cost_and_gradient(u, ensemble)?.1)
    }

    /// Reduced cost and gradient from a single forward sweep per path.
    pub fn cost_and_gradient(
        &self,
        u: &ControlProcess,
        ensemble: &Ensemble,
    ) -> Result<(CostEstimate, ControlProcess)> {
        self.check_gradient_domain(u)?;
        let trajs = self.trajectories(u, ensemble)?;
        let (mean, stderr) = mean_and_stderr(&self.costs(u, &trajs)?);
        let mut grad = self.mean_adjoint_from(&trajs)?;
        grad.axpy(self.weights.alpha3, u);
        Ok((CostEstimate { mean, stderr }, grad))
    }

    /// Gradients of the individual per-path costs `p̃_i + α₃ u`, for open-loop
    /// controls chosen path by path.
    pub fn gradient_per_path(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<Vec<ControlProcess>> {
        self.check_gradient_domain(u)?;
        let trajs = self.trajectories(u, ensemble)?;
        let mut per_path = self.adjoint_paths(&trajs)?;
        for g in &mut per_path {
            g.axpy(self.weights.alpha3, u);
        }
        Ok(per_path)
    }

    /// Orthogonal projection onto the ball `‖u‖_{L²(Q)} ≤ C0`.
    pub fn project(&self, u: &ControlProcess) -> ControlProcess {
        project_admissible(u, self.radius)
    }

    /// Stationarity measure of `u`.
    ///
    /// For `α₃ > 0` this is `‖u − P(−mean(p̃)/α₃)‖_{L²(Q)}`. For `α₃ = 0` it is
    /// the most negative directional derivative along feasible unit coordinate
    /// directions (zero at a point satisfying the variational inequality).
    pub fn optimality_residual(&self, u: &ControlProcess, ensemble: &Ensemble) -> Result<f64> {
        let p_bar = self.mean_adjoint(u, ensemble)?;
        Ok(self.optimality_residual_from(u, &p_bar))
    }

    pub(crate) fn optimality_residual_from(&self, u: &ControlProcess, p_bar: &ControlProcess) -> f64 {
        let alpha3 = self.weights.alpha3;
        if alpha3 > 0.0 {
            let candidate = self.project(&p_bar.scaled(-1.0 / alpha3));
            return u.sub(&candidate).norm();
        }
        let on_boundary = u.norm() >= self.radius * (1.0 - 1e-12);
        let tau = u.time().tau();
        let mut worst = 0.0_f64;
        for (uf, gf) in u.fields().iter().zip(p_bar.fields()) {
            let unit = (tau * uf.grid().cell_volume()).sqrt();
            for (&ui, &gi) in uf.values().iter().zip(gf.values()) {
                // directional derivative along ±e is ±g·unit
                for sign in [1.0, -1.0] {
                    if on_boundary && sign * ui > 0.0 {
                        continue;
                    }
                    worst = worst.max(-(sign * gi * unit));
                }
            }
        }
        worst
    }
}

/// Orthogonal projection onto `{‖u‖_{L²(Q)} ≤ radius}`: radial scaling when outside.
pub fn project_admissible(u: &ControlProcess, radius: f64) -> ControlProcess {
    let norm = u.norm();
    if norm <= radius {
        u.clone()
    } else {
        u.scaled(radius / norm)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::control::EnsembleSpec;
    use crate::grid::Grid;
    use crate::physics::{ModeSpec, NoiseKind, NoiseModel, NoiseShape, Potential};
    use crate::state::TimeGrid;

    fn random_control(g: &std::sync::Arc<Grid>, tg: TimeGrid, rng: &mut ChaCha8Rng) -> ControlProcess {
        let fields = (0..tg.nsteps())
            .map(|_| Field::from_values(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        ControlProcess::from_fields(tg, fields).unwrap()
    }

    fn problem(weights: CostWeights, nmodes: usize) -> (ControlProblem, Ensemble) {
        let g = Grid::line(16, 1.0).unwrap();
        let tg = TimeGrid::new(0.01, 20).unwrap();
        let noise = if nmodes == 0 {
            NoiseModel::none(&g)
        } else {
            NoiseModel::new(&g, NoiseKind::Multiplicative, NoiseShape::Tanh, &[ModeSpec::new(&[1], 0.2)], Default::default()).unwrap()
        };
        let solver = StateSolver::new(&g, Potential::double_well(), noise, tg, 2.0).unwrap();
        let target = TrackingTarget::constant(&Field::cosine_mode(&g, &[1]).scaled(0.5), &Field::zeros(&g), 20);
        let ens = Ensemble::new(EnsembleSpec::new(4, 3).unwrap(), nmodes, &tg);
        let p = ControlProblem::new(solver, Field::cosine_mode(&g, &[2]).scaled(0.3), weights, Targets::Shared(target), 1.0).unwrap();
        (p, ens)
    }

    #[test]
    fn projection_cases() {
        let g = Grid::line(8, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let u = ControlProcess::constant_in_time(&Field::constant(&g, 1.0), tg);
        let c0 = u.norm();
        assert_eq!(project_admissible(&u, 2.0 * c0), u);
        let p = project_admissible(&u, c0 / 2.0);
        assert!((p.norm() - c0 / 2.0).abs() < 1e-15);
        assert_eq!(project_admissible(&p, c0 / 2.0), p);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = random_control(&g, tg, &mut rng).scaled(3.0);
            let w = project_admissible(&random_control(&g, tg, &mut rng), 0.5);
            let pa = project_admissible(&a, 0.5);
            assert!(pa.norm() <= 0.5 + 1e-12);
            assert!(pa.sub(&w).norm() <= a.sub(&w).norm() + 1e-12);
            assert!(project_admissible(&pa, 0.5).sub(&pa).norm() <= 1e-14);
        }
    }

    #[test]
    fn pure_control_cost_gradient() {
        let (p, ens) = problem(CostWeights::new(0.0, 0.0, 1.0).unwrap(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = p.solver().grid().clone();
        let u = random_control(&g, *p.solver().time(), &mut rng).scaled(0.5);
        let grad = p.gradient(&u, &ens).unwrap();
        assert_eq!(grad, u);
        let zero = ControlProcess::zeros(&g, *p.solver().time());
        assert_eq!(p.gradient(&zero, &ens).unwrap().norm(), 0.0);
        assert_eq!(p.optimality_residual(&zero, &ens).unwrap(), 0.0);
        assert!(p.optimality_residual(&u, &ens).unwrap() > 0.0);
    }

    #[test]
    fn deterministic_ensemble_has_no_spread() {
        let (p, _) = problem(CostWeights::new(1.0, 1.0, 0.1).unwrap(), 0);
        let tg = *p.solver().time();
        let u = ControlProcess::from_fn(p.solver().grid(), tg, |t, x| x[0] + t);
        let one = Ensemble::new(EnsembleSpec::new(1, 9).unwrap(), 0, &tg);
        let eight = Ensemble::new(EnsembleSpec::new(8, 9).unwrap(), 0, &tg);
        let a = p.reduced_cost(&u, &one).unwrap();
        let b = p.reduced_cost(&u, &eight).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(b.stderr, 0.0);
    }

    #[test]
    fn gradient_domain_is_open_double_ball() {
        let (p, ens) = problem(CostWeights::new(1.0, 0.0, 0.0).unwrap(), 1);
        let tg = *p.solver().time();
        let u = ControlProcess::constant_in_time(&Field::constant(p.solver().grid(), 1.0), tg);
        let big = u.scaled(2.0 * (1.0 + 1e-9) / u.norm());
        assert!(matches!(p.gradient(&big, &ens), Err(Error::Domain(_))));
        assert!(p.gradient(&big.scaled(0.99), &ens).is_ok());
    }

    #[test]
    fn zero_alpha3_residual_uses_directional_derivatives() {
        let (p, ens) = problem(CostWeights::new(1.0, 1.0, 0.0).unwrap(), 1);
        let tg = *p.solver().time();
        let zero = ControlProcess::zeros(p.solver().grid(), tg);
        assert!(p.optimality_residual(&zero, &ens).unwrap() > 0.0);
        let (p0, _) = problem(CostWeights::new(0.0, 0.0, 0.0).unwrap(), 1);
        assert_eq!(p0.optimality_residual(&zero, &ens).unwrap(), 0.0);
    }
}
