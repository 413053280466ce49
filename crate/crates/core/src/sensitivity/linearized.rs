use serde::Serialize;

use super::l2_time_distance;
use crate::control::ControlProcess;
use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::physics::TruncationLevel;
use crate::state::{StateSolver, Trajectory};

/// Tangent states `z_0..z_N` and `μ_0..μ_{N−1}` along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSolution {
    pub states: Vec<Field>,
    pub potentials: Vec<Field>,
    pub truncation: TruncationLevel,
}

pub(crate) fn check_alignment(solver: &StateSolver, traj: &Trajectory) -> Result<()> {
    if traj.time() != solver.time() {
        return Err(Error::Config(
            "trajectory and solver use different time grids".into(),
        ));
    }
    if traj.wiener().nmodes() != solver.noise().nmodes() {
        return Err(Error::Config(
            "trajectory noise path does not match the solver's noise model".into(),
        ));
    }
    if **traj.state(0).grid() != **solver.grid() {
        return Err(Error::Config("trajectory lives on a different grid".into()));
    }
    Ok(())
}

/// Solves the linearised system along `traj` with source `h`, reusing the
/// trajectory's Brownian increments.
pub fn solve_linearized(
    solver: &StateSolver,
    traj: &Trajectory,
    h: &ControlProcess,
    truncation: TruncationLevel,
) -> Result<LinearizedSolution> {
    check_alignment(solver, traj)?;
    if h.time() != solver.time() || **h.grid() != **solver.grid() {
        return Err(Error::Config(
            "direction h is not defined on the solver's space-time grid".into(),
        ));
    }
    let n = traj.nsteps();
    let tau = solver.time().tau();
    let s = solver.stabilization();
    let pot = solver.potential();
    let noise = solver.noise();
    let grid = solver.grid();

    let mut states = Vec::with_capacity(n + 1);
    let mut potentials = Vec::with_capacity(n);
    states.push(Field::zeros(grid));
    for step in 0..n {
        let y = traj.state(step);
        let z = &states[step];
        let hn = h.field(step);
        let curvature = y.map(|r| pot.psi_second_truncated(r, truncation));
        let mut explicit = curvature.mul(z);
        explicit.axpy(-s, z);
        explicit.axpy(-1.0, hn);
        let mut rhs = grid::laplacian(&explicit).scaled(tau);
        rhs.axpy(1.0, z);
        if noise.is_state_dependent() {
            rhs.axpy(1.0, &noise.apply_db(y, z, traj.wiener().increment(step))?);
        }
        let mut mu = grid::laplacian(z).scaled(-1.0);
        mu.axpy(1.0, &curvature.mul(z));
        mu.axpy(-1.0, hn);
        potentials.push(mu);
        states.push(solver.apply_implicit_inverse(&rhs));
    }
    Ok(LinearizedSolution {
        states,
        potentials,
        truncation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub level: f64,
    /// `‖z^{(previous level)} − z^{(this level)}‖_{L²(0,T;H)}`; absent for the first level.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationTable {
    /// `max_{n,x} |Ψ''(y_n(x))|` along the trajectory.
    pub max_curvature: f64,
    pub rows: Vec<TruncationRow>,
}

impl TruncationTable {
    pub fn differences(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.difference).collect()
    }
}

/// Solves the linearised system at each truncation level (increasing) and
/// reports distances between consecutive solutions. Once a level exceeds
/// `max |Ψ''(y)|` the clamp is inactive and the solutions coincide bitwise.
pub fn convergence_in_truncation(
    solver: &StateSolver,
    traj: &Trajectory,
    h: &ControlProcess,
    levels: &[TruncationLevel],
) -> Result<TruncationTable> {
    if levels.windows(2).any(|w| !(w[0].level() < w[1].level())) {
        return Err(Error::Domain(
            "truncation levels must be strictly increasing".into(),
        ));
    }
    let pot = solver.potential();
    let max_curvature = traj.states()[..traj.nsteps()]
        .iter()
        .flat_map(|y| y.values().iter())
        .fold(0.0_f64, |m, &r| m.max(pot.psi_second(r).abs()));
    let tau = solver.time().tau();
    let mut rows = Vec::with_capacity(levels.len());
    let mut previous: Option<LinearizedSolution> = None;
    for &level in levels {
        let sol = solve_linearized(solver, traj, h, level)?;
        let difference = previous
            .as_ref()
            .map(|p| l2_time_distance(&p.states, &sol.states, tau));
        rows.push(TruncationRow {
            level: level.level(),
            difference,
        });
        previous = Some(sol);
    }
    Ok(TruncationTable {
        max_curvature,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{mean, Grid};
    use crate::physics::{ModeSpec, NoiseKind, NoiseModel, NoiseShape, Potential};
    use crate::state::{TimeGrid, WienerPath};

    fn solver(g: &Arc<Grid>, pot: Potential, kind: NoiseKind, s: f64) -> StateSolver {
        let noise = NoiseModel::new(
            g,
            kind,
            NoiseShape::Tanh,
            &[ModeSpec::new(&[1], 0.2), ModeSpec::new(&[3], 0.2)],
            Default::default(),
        )
        .unwrap();
        StateSolver::new(g, pot, noise, TimeGrid::new(0.02, 40).unwrap(), s).unwrap()
    }

    fn smooth_control(g: &Arc<Grid>, tg: TimeGrid, a: f64, b: f64) -> ControlProcess {
        ControlProcess::from_fn(g, tg, move |t, x| {
            a * (std::f64::consts::PI * x[0]).cos() * (1.0 + 20.0 * t) + b * (3.0 * std::f64::consts::PI * x[0]).cos()
        })
    }

    #[test]
    fn zero_direction_gives_zero() {
        let g = Grid::line(32, 1.0).unwrap();
        let s = solver(&g, Potential::double_well(), NoiseKind::Multiplicative, 2.0);
        let tg = *s.time();
        let traj = s
            .solve(&Field::cosine_mode(&g, &[2]).scaled(0.3), &ControlProcess::zeros(&g, tg), &WienerPath::sample(2, &tg, 9))
            .unwrap();
        let sol = solve_linearized(&s, &traj, &ControlProcess::zeros(&g, tg), TruncationLevel::NONE).unwrap();
        assert!(sol.states.iter().all(|z| z.max_abs() == 0.0));
        assert!(sol.potentials.iter().all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn per_mode_scalar_recursion() {
        let g = Grid::line(32, 1.0).unwrap();
        let s = solver(&g, Potential::zero(), NoiseKind::Additive, 0.0);
        let tg = *s.time();
        let tau = tg.tau();
        let traj = s
            .solve(&Field::zeros(&g), &ControlProcess::zeros(&g, tg), &WienerPath::sample(2, &tg, 1))
            .unwrap();
        for k in [1usize, 4] {
            let amp = 0.7;
            let vk = Field::cosine_mode(&g, &[k]);
            let h = ControlProcess::constant_in_time(&vk.scaled(amp), tg);
            let sol = solve_linearized(&s, &traj, &h, TruncationLevel::NONE).unwrap();
            let lam = g.eigenvalues()[k];
            let mut coef = 0.0;
            for n in 0..tg.nsteps() {
                coef = (coef - tau * lam * amp) / (1.0 + tau * lam * lam);
                let z = &sol.states[n + 1];
                for (a, b) in z.values().iter().zip(vk.values()) {
                    assert!((a - coef * b).abs() < 1e-12 * (1.0 + coef.abs()));
                }
            }
        }
    }

    #[test]
    fn linear_in_direction_and_mean_free() {
        let g = Grid::line(32, 1.0).unwrap();
        let s = solver(&g, Potential::double_well(), NoiseKind::Multiplicative, 2.0);
        let tg = *s.time();
        let traj = s
            .solve(&Field::cosine_mode(&g, &[2]).scaled(0.5), &smooth_control(&g, tg, 1.0, 0.0), &WienerPath::sample(2, &tg, 3))
            .unwrap();
        let h1 = smooth_control(&g, tg, 1.0, -2.0);
        let h2 = ControlProcess::from_fn(&g, tg, |t, x| (5.0 * x[0] + 30.0 * t).sin());
        let z1 = solve_linearized(&s, &traj, &h1, TruncationLevel::NONE).unwrap();
        let z2 = solve_linearized(&s, &traj, &h2, TruncationLevel::NONE).unwrap();
        let z12 = solve_linearized(&s, &traj, &h1.add(&h2), TruncationLevel::NONE).unwrap();
        let scale = z12.states.iter().fold(0.0_f64, |m, z| m.max(z.max_abs()));
        for n in 0..=tg.nsteps() {
            let diff = z12.states[n].sub(&z1.states[n].add(&z2.states[n]));
            assert!(diff.max_abs() <= 1e-11 * (1.0 + scale));
            assert!(mean(&z12.states[n]).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_table() {
        let g = Grid::line(32, 1.0).unwrap();
        let s = solver(&g, Potential::double_well(), NoiseKind::Multiplicative, 2.0);
        let tg = *s.time();
        let y0 = Field::cosine_mode(&g, &[1]).scaled(1.4);
        let traj = s.solve(&y0, &ControlProcess::zeros(&g, tg), &WienerPath::sample(2, &tg, 4)).unwrap();
        let h = smooth_control(&g, tg, 1.0, 0.5);
        let levels: Vec<TruncationLevel> = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&l| TruncationLevel::new(l).unwrap())
            .collect();
        let table = convergence_in_truncation(&s, &traj, &h, &levels).unwrap();
        assert!(table.max_curvature > 4.0 && table.max_curvature < 8.0);
        let d = table.differences();
        assert_eq!(d.len(), 6);
        assert_eq!(d[5], 0.0);
        assert!(d[4] > 0.0);
        for w in d.windows(2) {
            assert!(w[1] <= w[0]);
        }

        let zero = convergence_in_truncation(&s, &traj, &ControlProcess::zeros(&g, tg), &levels).unwrap();
        assert!(zero.differences().iter().all(|&x| x == 0.0));

        let bad = [TruncationLevel::new(2.0).unwrap(), TruncationLevel::new(1.0).unwrap()];
        assert!(convergence_in_truncation(&s, &traj, &h, &bad).is_err());
    }

    #[test]
    fn rejects_mismatched_direction() {
        let g = Grid::line(32, 1.0).unwrap();
        let s = solver(&g, Potential::double_well(), NoiseKind::Additive, 2.0);
        let tg = *s.time();
        let traj = s.solve(&Field::zeros(&g), &ControlProcess::zeros(&g, tg), &WienerPath::sample(2, &tg, 4)).unwrap();
        let other = ControlProcess::zeros(&g, TimeGrid::new(0.02, 20).unwrap());
        assert!(solve_linearized(&s, &traj, &other, TruncationLevel::NONE).is_err());
    }
}
