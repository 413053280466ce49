use std::sync::Arc;

use crate::control::ControlProcess;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::physics::{NoiseModel, Potential};

use super::{TimeGrid, WienerPath};

/// Linearly-implicit stabilised Euler–Maruyama integrator for
///
/// ```text
/// dy = Δw dt + B(y) dW,   w = −Δy + Ψ'(y) − u,   ∂_n y = ∂_n w = 0.
/// ```
///
/// One step solves
///
/// ```text
/// (I + τΔ² − τSΔ) y_{n+1} = y_n + τΔ(Ψ'(y_n) − S y_n − u_n) + B(y_n) ΔW_n
/// ```
///
/// with the left-hand operator inverted diagonally in cosine space.
/// States with `max |y| > BLOW_UP_LIMIT` (or any non-finite value) abort the
/// integration with [`Error::BlowUp`].
pub const BLOW_UP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct StateSolver {
    grid: Arc<Grid>,
    potential: Potential,
    noise: NoiseModel,
    time: TimeGrid,
    stabilization: f64,
    /// Cosine-space symbol of `(I + τΔ² − τSΔ)^{-1}`.
    implicit_symbol: Vec<f64>,
}

impl StateSolver {
    pub fn new(
        grid: &Arc<Grid>,
        potential: Potential,
        noise: NoiseModel,
        time: TimeGrid,
        stabilization: f64,
    ) -> Result<Self> {
        if !(stabilization >= potential.c1()) || !stabilization.is_finite() {
            return Err(Error::Domain(format!(
                "stabilization S = {stabilization} must be finite and at least c1 = {}",
                potential.c1()
            )));
        }
        if **noise.grid() != **grid {
            return Err(Error::Config("noise model lives on a different grid".into()));
        }
        let tau = time.tau();
        let implicit_symbol = grid
            .eigenvalues()
            .iter()
            .map(|&l| 1.0 / (1.0 + tau * l * l - tau * stabilization * l))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            potential,
            noise,
            time,
            stabilization,
            implicit_symbol,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn stabilization(&self) -> f64 {
        self.stabilization
    }

    /// Same physics on another time grid (the implicit symbol depends on `τ`).
    pub fn with_time(&self, time: TimeGrid) -> Result<Self> {
        Self::new(
            &self.grid,
            self.potential.clone(),
            self.noise.clone(),
            time,
            self.stabilization,
        )
    }

    /// Same grid and time stepping, different noise.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(
            &self.grid,
            self.potential.clone(),
            noise,
            self.time,
            self.stabilization,
        )
    }

    /// Applies `(I + τΔ² − τSΔ)^{-1}`. The operator is symmetric.
    pub fn apply_implicit_inverse(&self, x: &Field) -> Field {
        Field::from_raw(&self.grid, self.grid.apply_symbol(&self.implicit_symbol, x.values()))
    }

    /// `w = −Δy + Ψ'(y) − u`.
    pub fn chemical_potential(&self, y: &Field, u: &Field) -> Field {
        chemical_potential(y, u, &self.potential)
    }

    /// One time step; returns `(y_{n+1}, w_n)`. `step` is only used for diagnostics.
    pub fn step(&self, y: &Field, u: &Field, dw: &[f64], step: usize) -> Result<(Field, Field)> {
        let s = self.stabilization;
        let tau = self.time.tau();
        let explicit = y.zip_map(u, |r, c| self.potential.psi_prime(r) - s * r - c);
        let mut rhs = grid::laplacian(&explicit).scaled(tau);
        rhs.axpy(1.0, y);
        if self.noise.nmodes() > 0 {
            rhs.axpy(1.0, &self.noise.apply_b(y, dw)?);
        }
        let next = self.apply_implicit_inverse(&rhs);
        let max_abs = next.max_abs();
        if !next.is_finite() || max_abs > BLOW_UP_LIMIT {
            return Err(Error::BlowUp {
                step,
                max_abs: if next.is_finite() { max_abs } else { y.max_abs() },
            });
        }
        Ok((next, self.chemical_potential(y, u)))
    }

    /// Integrates one noise path from `y0` under control `u`.
    pub fn solve(&self, y0: &Field, u: &ControlProcess, wiener: &WienerPath) -> Result<Trajectory> {
        let n = self.time.nsteps();
        if u.len() != n || u.time() != &self.time {
            return Err(Error::Config(format!(
                "control has {} steps on a different time grid than the solver ({n} steps)",
                u.len()
            )));
        }
        if wiener.nsteps() != n || wiener.nmodes() != self.noise.nmodes() {
            return Err(Error::Config(format!(
                "wiener path is {}x{}, solver needs {n}x{}",
                wiener.nsteps(),
                wiener.nmodes(),
                self.noise.nmodes()
            )));
        }
        if !y0.same_grid(&Field::zeros(&self.grid)) {
            return Err(Error::Config("initial state lives on a different grid".into()));
        }
        let mut states = Vec::with_capacity(n + 1);
        let mut potentials = Vec::with_capacity(n);
        states.push(y0.clone());
        for step in 0..n {
            let (next, w) = self.step(&states[step], u.field(step), wiener.increment(step), step)?;
            states.push(next);
            potentials.push(w);
        }
        let mass = states.iter().map(grid::mean).collect();
        let energy = states.iter().map(|y| energy(y, &self.potential)).collect();
        Ok(Trajectory {
            time: self.time,
            states,
            potentials,
            wiener: wiener.clone(),
            mass,
            energy,
        })
    }
}

/// `w = −Δy + Ψ'(y) − u`.
pub fn chemical_potential(y: &Field, u: &Field, potential: &Potential) -> Field {
    let mut w = grid::laplacian(y).scaled(-1.0);
    for ((wi, &yi), &ui) in w.values_mut().iter_mut().zip(y.values()).zip(u.values()) {
        *wi += potential.psi_prime(yi) - ui;
    }
    w
}

/// Free energy `½‖∇y‖²_H + ∫_D Ψ(y)`.
pub fn energy(y: &Field, potential: &Potential) -> f64 {
    let bulk: f64 = y.values().iter().map(|&r| potential.psi(r)).sum();
    0.5 * grid::gradient_norm_sq(y) + bulk * y.grid().cell_volume()
}

/// States `y_0..y_N`, chemical potentials `w_0..w_{N−1}` and the noise path
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    time: TimeGrid,
    states: Vec<Field>,
    potentials: Vec<Field>,
    wiener: WienerPath,
    mass: Vec<f64>,
    energy: Vec<f64>,
}

impl Trajectory {
    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn nsteps(&self) -> usize {
        self.potentials.len()
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &Field {
        &self.states[n]
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn potentials(&self) -> &[Field] {
        &self.potentials
    }

    pub fn wiener(&self) -> &WienerPath {
        &self.wiener
    }

    /// `mean(y_n)` per node.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Free energy per node.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    /// `max_n |mean(y_n) − mean(y_0)|`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().fold(0.0, |acc, m| acc.max((m - m0).abs()))
    }

    /// `max_n max_x |y_n(x)|`.
    pub fn max_abs(&self) -> f64 {
        self.states.iter().fold(0.0, |acc, y| acc.max(y.max_abs()))
    }
}
