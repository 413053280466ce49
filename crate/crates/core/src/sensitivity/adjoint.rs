use serde::{Deserialize, Serialize};

use super::linearized::check_alignment;
use crate::control::{CostWeights, TrackingTarget};
use crate::error::Result;
use crate::grid::{self, Field};
use crate::physics::TruncationLevel;
use crate::state::{StateSolver, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdjointBackend {
    /// Exact transpose of the discrete linearised recursion on the realised path.
    #[default]
    DiscreteTranspose,
    /// Backward semi-implicit discretisation of the adjoint equation with the
    /// martingale term dropped.
    Continuous,
}

/// Adjoint fields `p_0..p_N` and `p̃_n = −Δp_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub p: Vec<Field>,
    pub p_tilde: Vec<Field>,
    pub backend: AdjointBackend,
    /// Set when the continuous backend was used with state-dependent noise:
    /// dropping `DB(y)* q` biases the result.
    pub biased: bool,
}

impl AdjointSolution {
    /// `p̃_0..p̃_{N−1}`, the part that pairs with a control direction.
    pub fn control_gradient(&self) -> &[Field] {
        &self.p_tilde[..self.p_tilde.len() - 1]
    }
}

/// Backward sweep for the adjoint system along `traj`.
///
/// Terminal datum `p_N = α₂(y_N − x_T)`. With the discrete-transpose backend,
/// writing `A = (I + τΔ² − τSΔ)^{-1}` and `c_n = Ψ''_n(y_n)`:
///
/// ```text
/// λ_N = p_N
/// p_n = A λ_{n+1}
/// λ_n = p_n + τ(c_n − S)Δp_n + DB(y_n)ᵀ[p_n] ΔW_n + τα₁(y_n − x_{Q,n})
/// ```
///
/// The continuous backend instead uses
/// `p_n = A[p_{n+1} + τ(c_n − S)Δp_{n+1} + τα₁(y_n − x_{Q,n})]`.
pub fn solve_adjoint(
    solver: &StateSolver,
    traj: &Trajectory,
    target: &TrackingTarget,
    weights: &CostWeights,
    backend: AdjointBackend,
    truncation: TruncationLevel,
) -> Result<AdjointSolution> {
    check_alignment(solver, traj)?;
    let n = traj.nsteps();
    target.check(n)?;
    let tau = solver.time().tau();
    let s = solver.stabilization();
    let pot = solver.potential();
    let noise = solver.noise();
    let residuals = target.residuals(traj);

    let mut p = vec![Field::zeros(solver.grid()); n + 1];
    p[n] = residuals[n].scaled(weights.alpha2);
    match backend {
        AdjointBackend::DiscreteTranspose => {
            let mut lambda = p[n].clone();
            for step in (0..n).rev() {
                let pn = solver.apply_implicit_inverse(&lambda);
                let y = traj.state(step);
                let coeff = y.map(|r| pot.psi_second_truncated(r, truncation) - s);
                lambda = pn.add(&grid::laplacian(&pn).mul(&coeff).scaled(tau));
                if noise.is_state_dependent() {
                    lambda.axpy(1.0, &noise.apply_db_transpose(y, &pn, traj.wiener().increment(step))?);
                }
                lambda.axpy(tau * weights.alpha1, &residuals[step]);
                p[step] = pn;
            }
        }
        AdjointBackend::Continuous => {
            for step in (0..n).rev() {
                let y = traj.state(step);
                let coeff = y.map(|r| pot.psi_second_truncated(r, truncation) - s);
                let next = &p[step + 1];
                let mut rhs = next.add(&grid::laplacian(next).mul(&coeff).scaled(tau));
                rhs.axpy(tau * weights.alpha1, &residuals[step]);
                p[step] = solver.apply_implicit_inverse(&rhs);
            }
        }
    }
    let p_tilde = p.iter().map(|x| grid::laplacian(x).scaled(-1.0)).collect();
    Ok(AdjointSolution {
        p,
        p_tilde,
        backend,
        biased: backend == AdjointBackend::Continuous && noise.is_state_dependent(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::control::ControlProcess;
    use crate::grid::{inner_h, mean, Grid};
    use crate::physics::{ModeSpec, NoiseKind, NoiseModel, NoiseShape, Potential};
    use crate::sensitivity::solve_linearized;
    use crate::state::{TimeGrid, WienerPath};

    fn setup(kind: NoiseKind) -> (Arc<Grid>, StateSolver, Trajectory) {
        let g = Grid::line(24, 1.0).unwrap();
        let noise = NoiseModel::new(
            &g,
            kind,
            NoiseShape::Tanh,
            &[ModeSpec::new(&[1], 0.3), ModeSpec::new(&[2], 0.3)],
            Default::default(),
        )
        .unwrap();
        let tg = TimeGrid::new(0.02, 30).unwrap();
        let solver = StateSolver::new(&g, Potential::double_well(), noise, tg, 2.0).unwrap();
        let u = ControlProcess::from_fn(&g, tg, |t, x| (4.0 * x[0]).cos() * (1.0 - 10.0 * t));
        let traj = solver
            .solve(&Field::cosine_mode(&g, &[2]).scaled(0.6), &u, &WienerPath::sample(2, &tg, 12))
            .unwrap();
        (g, solver, traj)
    }

    fn target(g: &Arc<Grid>, n: usize) -> TrackingTarget {
        TrackingTarget::constant(&Field::from_fn(g, |x| 0.3 * x[0]), &Field::cosine_mode(g, &[1]).scaled(0.2), n)
    }

    #[test]
    fn zero_weights_give_zero_adjoint() {
        let (g, solver, traj) = setup(NoiseKind::Multiplicative);
        let w = CostWeights::new(0.0, 0.0, 1.0).unwrap();
        for backend in [AdjointBackend::DiscreteTranspose, AdjointBackend::Continuous] {
            let adj = solve_adjoint(&solver, &traj, &target(&g, 30), &w, backend, TruncationLevel::NONE).unwrap();
            assert!(adj.p.iter().chain(&adj.p_tilde).all(|f| f.max_abs() == 0.0));
        }
    }

    #[test]
    fn terminal_condition_and_invariants() {
        let (g, solver, traj) = setup(NoiseKind::Multiplicative);
        let t = target(&g, 30);
        let w = CostWeights::new(0.0, 1.0, 0.0).unwrap();
        for backend in [AdjointBackend::DiscreteTranspose, AdjointBackend::Continuous] {
            let adj = solve_adjoint(&solver, &traj, &t, &w, backend, TruncationLevel::NONE).unwrap();
            assert_eq!(adj.p[30], traj.final_state().sub(&t.x_t));
            for (p, pt) in adj.p.iter().zip(&adj.p_tilde) {
                let lap = grid::laplacian(p).scaled(-1.0);
                assert!(lap.sub(pt).max_abs() <= 1e-10 * (1.0 + pt.max_abs()));
                assert!(mean(pt).abs() <= 1e-10 * (1.0 + pt.max_abs()));
            }
            assert_eq!(adj.biased, backend == AdjointBackend::Continuous);
        }
    }

    #[test]
    fn duality_on_random_directions() {
        for kind in [NoiseKind::Additive, NoiseKind::Multiplicative] {
            let (g, solver, traj) = setup(kind);
            let t = target(&g, 30);
            let w = CostWeights::new(1.3, 0.7, 0.0).unwrap();
            let adj = solve_adjoint(&solver, &traj, &t, &w, AdjointBackend::DiscreteTranspose, TruncationLevel::NONE).unwrap();
            let tg = *solver.time();
            let tau = tg.tau();
            for seed in 0..5u32 {
                let f = seed as f64;
                let h = ControlProcess::from_fn(&g, tg, move |tt, x| ((2.0 + f) * x[0] + 50.0 * tt * f).sin());
                let z = solve_linearized(&solver, &traj, &h, TruncationLevel::NONE).unwrap();
                let lhs: f64 = (0..30).map(|n| tau * inner_h(h.field(n), &adj.p_tilde[n])).sum();
                let mut rhs: f64 = (0..30).map(|n| 1.3 * tau * inner_h(&traj.state(n).sub(&t.x_q[n]), &z.states[n])).sum();
                rhs += 0.7 * inner_h(&traj.final_state().sub(&t.x_t), &z.states[30]);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
            }
        }
    }
}
