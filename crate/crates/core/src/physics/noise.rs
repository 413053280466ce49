//! Finite-rank noise operator `B(y) : ℝ^K → H`.
//!
//! The cylindrical Wiener process is truncated to `K` scalar Brownian motions.
//! Mode `k` has a cosine profile `g_k` and amplitude `σ_k`:
//!
//! ```text
//! additive:        B(y) e_k = σ_k g_k
//! multiplicative:  B(y) e_k = σ_k P₀(g_k ⊙ ρ(y))
//! ```
//!
//! where `P₀` removes the grid mean and `ρ` is bounded with bounded derivative
//! (`tanh` by default). Multiplicative noise is therefore mean-free and
//! conserves mass exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

/// Pointwise shape `ρ` of the multiplicative noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    #[default]
    Tanh,
    /// `ρ(r) = r`; unbounded, so only accepted with an explicit override.
    Linear,
}

impl NoiseShape {
    fn rho(self, r: f64) -> f64 {
        match self {
            NoiseShape::Tanh => r.tanh(),
            NoiseShape::Linear => r,
        }
    }

    fn rho_prime(self, r: f64) -> f64 {
        match self {
            NoiseShape::Tanh => {
                let c = r.cosh();
                1.0 / (c * c)
            }
            NoiseShape::Linear => 1.0,
        }
    }
}

/// One noise mode before discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    /// Cosine wavenumber per axis (missing axes count as 0).
    pub wavenumbers: Vec<usize>,
    pub amplitude: f64,
}

impl ModeSpec {
    pub fn new(wavenumbers: &[usize], amplitude: f64) -> Self {
        Self {
            wavenumbers: wavenumbers.to_vec(),
            amplitude,
        }
    }
}

/// Override switches for configurations the defaults reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NoiseOverrides {
    /// Allow a constant (non-zero-mean) additive mode. Breaks mass conservation.
    pub allow_mean_mode: bool,
    /// Allow the unbounded linear multiplicative shape.
    pub allow_linear_shape: bool,
}

#[derive(Debug, Clone)]
struct Mode {
    amplitude: f64,
    profile: Field,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: Arc<Grid>,
    kind: NoiseKind,
    shape: NoiseShape,
    modes: Vec<Mode>,
    lipschitz: f64,
}

/// Subtracts the grid mean.
fn project_zero_mean(mut x: Field) -> Field {
    let m = grid::mean(&x);
    x.shift(-m);
    x
}

impl NoiseModel {
    /// No noise (`K = 0`): reproduces the deterministic equation.
    pub fn none(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            kind: NoiseKind::Additive,
            shape: NoiseShape::Tanh,
            modes: Vec::new(),
            lipschitz: 0.0,
        }
    }

    pub fn new(
        grid: &Arc<Grid>,
        kind: NoiseKind,
        shape: NoiseShape,
        modes: &[ModeSpec],
        overrides: NoiseOverrides,
    ) -> Result<Self> {
        if shape == NoiseShape::Linear && kind == NoiseKind::Multiplicative && !overrides.allow_linear_shape {
            return Err(Error::Config(
                "linear multiplicative noise requires the allow_linear_shape override".into(),
            ));
        }
        let mut built = Vec::with_capacity(modes.len());
        for (idx, m) in modes.iter().enumerate() {
            if !(m.amplitude >= 0.0 && m.amplitude.is_finite()) {
                return Err(Error::Config(format!(
                    "noise mode {idx}: amplitude must be finite and nonnegative, got {}",
                    m.amplitude
                )));
            }
            if m.wavenumbers.len() > grid.ndims() {
                return Err(Error::Config(format!(
                    "noise mode {idx}: {} wavenumbers for a {}-d grid",
                    m.wavenumbers.len(),
                    grid.ndims()
                )));
            }
            for (axis, &k) in m.wavenumbers.iter().enumerate() {
                if k >= grid.dims()[axis] {
                    return Err(Error::Config(format!(
                        "noise mode {idx}: wavenumber {k} not resolved by {} points",
                        grid.dims()[axis]
                    )));
                }
            }
            let constant = m.wavenumbers.iter().all(|&k| k == 0);
            if constant && kind == NoiseKind::Additive && !overrides.allow_mean_mode {
                return Err(Error::Config(format!(
                    "noise mode {idx}: constant additive mode breaks mass conservation; \
                     set allow_mean_mode to use it"
                )));
            }
            built.push(Mode {
                amplitude: m.amplitude,
                profile: Field::cosine_mode(grid, &m.wavenumbers),
            });
        }
        let mut model = Self {
            grid: grid.clone(),
            kind,
            shape,
            modes: built,
            lipschitz: 0.0,
        };
        model.lipschitz = model.compute_lipschitz();
        Ok(model)
    }

    fn compute_lipschitz(&self) -> f64 {
        match self.kind {
            // B is constant: only the growth bound matters.
            NoiseKind::Additive => self
                .modes
                .iter()
                .map(|m| m.amplitude * m.amplitude * grid::inner_h(&m.profile, &m.profile))
                .sum::<f64>()
                .sqrt(),
            // P₀ is nonexpansive and |ρ'| ≤ 1, |ρ(r)| ≤ |r| for both shapes.
            NoiseKind::Multiplicative => self
                .modes
                .iter()
                .map(|m| {
                    let g = m.profile.max_abs();
                    m.amplitude * m.amplitude * g * g
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn shape(&self) -> NoiseShape {
        self.shape
    }

    /// Number of Brownian motions `K`.
    pub fn nmodes(&self) -> usize {
        self.modes.len()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.amplitude).collect()
    }

    pub fn profile(&self, k: usize) -> &Field {
        &self.modes[k].profile
    }

    /// `L_B`: Lipschitz and linear-growth constant in `𝓛²(ℝ^K, H)`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    /// Whether every output of `B` has zero mean, so that mass is conserved.
    pub fn is_mean_free(&self) -> bool {
        match self.kind {
            NoiseKind::Multiplicative => true,
            NoiseKind::Additive => self
                .modes
                .iter()
                .all(|m| m.amplitude == 0.0 || grid::mean(&m.profile).abs() <= 1e-14),
        }
    }

    /// Whether `B` depends on the state.
    pub fn is_state_dependent(&self) -> bool {
        self.kind == NoiseKind::Multiplicative && !self.modes.is_empty()
    }

    /// A copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.amplitude *= factor;
        }
        out.lipschitz = out.compute_lipschitz();
        out
    }

    /// Same modes, different kind.
    pub fn with_kind(&self, kind: NoiseKind) -> Self {
        let mut out = self.clone();
        out.kind = kind;
        out.lipschitz = out.compute_lipschitz();
        out
    }

    fn check_increments(&self, dw: &[f64]) -> Result<()> {
        if dw.len() != self.modes.len() {
            return Err(Error::Shape {
                context: "noise increments",
                expected: self.modes.len(),
                got: dw.len(),
            });
        }
        Ok(())
    }

    /// Image `B(y) e_k` of every basis vector.
    pub fn apply_b_modes(&self, y: &Field) -> Vec<Field> {
        match self.kind {
            NoiseKind::Additive => self
                .modes
                .iter()
                .map(|m| m.profile.scaled(m.amplitude))
                .collect(),
            NoiseKind::Multiplicative => {
                let rho = y.map(|r| self.shape.rho(r));
                self.modes
                    .iter()
                    .map(|m| project_zero_mean(m.profile.mul(&rho)).scaled(m.amplitude))
                    .collect()
            }
        }
    }

    /// `B(y) dW = Σ_k (B(y) e_k) dW_k`.
    pub fn apply_b(&self, y: &Field, dw: &[f64]) -> Result<Field> {
        self.check_increments(dw)?;
        let mut out = Field::zeros(&self.grid);
        match self.kind {
            NoiseKind::Additive => {
                for (m, &d) in self.modes.iter().zip(dw) {
                    out.axpy(m.amplitude * d, &m.profile);
                }
            }
            NoiseKind::Multiplicative => {
                let rho = y.map(|r| self.shape.rho(r));
                for (m, &d) in self.modes.iter().zip(dw) {
                    out.axpy(m.amplitude * d, &m.profile.mul(&rho));
                }
                out = project_zero_mean(out);
            }
        }
        Ok(out)
    }

    /// `DB(y)[z] e_k` for every mode.
    pub fn apply_db_modes(&self, y: &Field, z: &Field) -> Vec<Field> {
        match self.kind {
            NoiseKind::Additive => vec![Field::zeros(&self.grid); self.modes.len()],
            NoiseKind::Multiplicative => {
                let drho_z = y.zip_map(z, |r, v| self.shape.rho_prime(r) * v);
                self.modes
                    .iter()
                    .map(|m| project_zero_mean(m.profile.mul(&drho_z)).scaled(m.amplitude))
                    .collect()
            }
        }
    }

    /// `DB(y)[z] dW = Σ_k σ_k P₀(g_k ⊙ ρ'(y) ⊙ z) dW_k`; zero for additive noise.
    pub fn apply_db(&self, y: &Field, z: &Field, dw: &[f64]) -> Result<Field> {
        self.check_increments(dw)?;
        let mut out = Field::zeros(&self.grid);
        if self.kind == NoiseKind::Additive {
            return Ok(out);
        }
        let drho_z = y.zip_map(z, |r, v| self.shape.rho_prime(r) * v);
        for (m, &d) in self.modes.iter().zip(dw) {
            out.axpy(m.amplitude * d, &m.profile.mul(&drho_z));
        }
        Ok(project_zero_mean(out))
    }

    /// `DB(y)* q = ρ'(y) ⊙ Σ_k σ_k g_k ⊙ P₀(q_k)`, the `H`-adjoint of
    /// `z ↦ (DB(y)[z] e_k)_k`.
    pub fn apply_db_adjoint(&self, y: &Field, q: &[Field]) -> Result<Field> {
        if q.len() != self.modes.len() {
            return Err(Error::Shape {
                context: "adjoint noise components",
                expected: self.modes.len(),
                got: q.len(),
            });
        }
        let mut acc = Field::zeros(&self.grid);
        if self.kind == NoiseKind::Additive {
            return Ok(acc);
        }
        for (m, qk) in self.modes.iter().zip(q) {
            acc.axpy(m.amplitude, &m.profile.mul(&project_zero_mean(qk.clone())));
        }
        Ok(acc.zip_map(y, |a, r| a * self.shape.rho_prime(r)))
    }

    /// Transpose of `z ↦ DB(y)[z] dW` for fixed increments:
    /// `v ↦ ρ'(y) ⊙ Σ_k σ_k dW_k g_k ⊙ P₀(v)`.
    pub fn apply_db_transpose(&self, y: &Field, v: &Field, dw: &[f64]) -> Result<Field> {
        self.check_increments(dw)?;
        if self.kind == NoiseKind::Additive {
            return Ok(Field::zeros(&self.grid));
        }
        let pv = project_zero_mean(v.clone());
        let mut acc = Field::zeros(&self.grid);
        for (m, &d) in self.modes.iter().zip(dw) {
            acc.axpy(m.amplitude * d, &m.profile);
        }
        Ok(acc.zip_map(&pv, |a, p| a * p).zip_map(y, |a, r| a * self.shape.rho_prime(r)))
    }

    /// Hilbert–Schmidt norm `‖B(y1) − B(y2)‖_{𝓛²(ℝ^K, H)}`.
    pub fn hs_distance(&self, y1: &Field, y2: &Field) -> f64 {
        self.apply_b_modes(y1)
            .iter()
            .zip(self.apply_b_modes(y2))
            .map(|(a, b)| {
                let d = a.sub(&b);
                grid::inner_h(&d, &d)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Empirical ratio `‖B(x)‖_{𝓛²(ℝ^K, V)} / (1 + ‖x‖_V)` maximised over the samples.
    pub fn probe_v_bound<'a>(&self, samples: impl IntoIterator<Item = &'a Field>) -> f64 {
        samples
            .into_iter()
            .map(|x| {
                let hs_v: f64 = self
                    .apply_b_modes(x)
                    .iter()
                    .map(|b| grid::norm_v(b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                hs_v / (1.0 + grid::norm_v(x))
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::grid::{inner_h, mean, norm_h};

    fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng, scale: f64) -> Field {
        Field::from_values(g, (0..g.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn models(g: &Arc<Grid>) -> Vec<NoiseModel> {
        let modes = [ModeSpec::new(&[1], 0.3), ModeSpec::new(&[2], 0.1), ModeSpec::new(&[0], 0.2)];
        vec![
            NoiseModel::new(g, NoiseKind::Multiplicative, NoiseShape::Tanh, &modes, Default::default()).unwrap(),
            NoiseModel::new(
                g,
                NoiseKind::Multiplicative,
                NoiseShape::Linear,
                &modes,
                NoiseOverrides { allow_linear_shape: true, ..Default::default() },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn zero_increment_gives_zero() {
        let g = Grid::line(16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_field(&g, &mut rng, 1.0);
        for nm in models(&g) {
            assert_eq!(nm.apply_b(&y, &[0.0; 3]).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn additive_single_mode() {
        let g = Grid::line(16, 1.0).unwrap();
        assert!(NoiseModel::new(&g, NoiseKind::Additive, NoiseShape::Tanh, &[ModeSpec::new(&[0], 1.0)], Default::default()).is_err());
        let nm = NoiseModel::new(&g, NoiseKind::Additive, NoiseShape::Tanh, &[ModeSpec::new(&[1], 0.7)], Default::default()).unwrap();
        let out = nm.apply_b(&Field::constant(&g, 5.0), &[1.0]).unwrap();
        let expect = Field::cosine_mode(&g, &[1]).scaled(0.7);
        assert_eq!(out, expect);
        assert!(nm.is_mean_free());
        assert!(matches!(nm.apply_b(&out, &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn mean_mode_override() {
        let g = Grid::line(16, 1.0).unwrap();
        let nm = NoiseModel::new(
            &g,
            NoiseKind::Additive,
            NoiseShape::Tanh,
            &[ModeSpec::new(&[0], 1.0)],
            NoiseOverrides { allow_mean_mode: true, ..Default::default() },
        )
        .unwrap();
        assert!(!nm.is_mean_free());
    }

    #[test]
    fn linear_shape_needs_override() {
        let g = Grid::line(16, 1.0).unwrap();
        assert!(NoiseModel::new(&g, NoiseKind::Multiplicative, NoiseShape::Linear, &[ModeSpec::new(&[1], 1.0)], Default::default()).is_err());
        assert!(NoiseModel::new(&g, NoiseKind::Additive, NoiseShape::Tanh, &[ModeSpec::new(&[16], 1.0)], Default::default()).is_err());
    }

    #[test]
    fn multiplicative_vanishes_at_zero_state_and_is_mean_free() {
        let g = Grid::rect([8, 8], [1.0, 1.0]).unwrap();
        let nm = NoiseModel::new(
            &g,
            NoiseKind::Multiplicative,
            NoiseShape::Tanh,
            &[ModeSpec::new(&[1, 0], 0.5), ModeSpec::new(&[0, 2], 0.5)],
            Default::default(),
        )
        .unwrap();
        assert_eq!(nm.apply_b(&Field::zeros(&g), &[0.3, -1.2]).unwrap().max_abs(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let y = random_field(&g, &mut rng, 3.0);
            let dw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!(mean(&nm.apply_b(&y, &dw).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn derivative_vanishes_for_additive_and_zero_direction() {
        let g = Grid::line(16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_field(&g, &mut rng, 1.0);
        let z = random_field(&g, &mut rng, 1.0);
        let add = NoiseModel::new(&g, NoiseKind::Additive, NoiseShape::Tanh, &[ModeSpec::new(&[1], 1.0)], Default::default()).unwrap();
        assert_eq!(add.apply_db(&y, &z, &[0.4]).unwrap().max_abs(), 0.0);
        assert_eq!(add.apply_db_adjoint(&y, std::slice::from_ref(&z)).unwrap().max_abs(), 0.0);
        for nm in models(&g) {
            assert_eq!(nm.apply_db(&y, &Field::zeros(&g), &[1.0, 2.0, 3.0]).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn adjoint_identity() {
        let g = Grid::line(24, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for nm in models(&g) {
            for _ in 0..20 {
                let y = random_field(&g, &mut rng, 2.0);
                let z = random_field(&g, &mut rng, 1.0);
                let q: Vec<Field> = (0..3).map(|_| random_field(&g, &mut rng, 1.0)).collect();
                let lhs: f64 = nm.apply_db_modes(&y, &z).iter().zip(&q).map(|(a, b)| inner_h(a, b)).sum();
                let rhs = inner_h(&z, &nm.apply_db_adjoint(&y, &q).unwrap());
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));

                let dw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let v = random_field(&g, &mut rng, 1.0);
                let a = inner_h(&nm.apply_db(&y, &z, &dw).unwrap(), &v);
                let b = inner_h(&z, &nm.apply_db_transpose(&y, &v, &dw).unwrap());
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn lipschitz_certificate() {
        let g = Grid::line(32, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for nm in models(&g) {
            let lb = nm.lipschitz_constant();
            assert!(lb > 0.0);
            for _ in 0..1000 {
                let y1 = random_field(&g, &mut rng, 3.0);
                let y2 = random_field(&g, &mut rng, 3.0);
                assert!(nm.hs_distance(&y1, &y2) <= lb * norm_h(&y1.sub(&y2)) * (1.0 + 1e-12));
                let zero = Field::zeros(&g);
                assert!(nm.hs_distance(&y1, &zero) <= lb * (1.0 + norm_h(&y1)));
            }
        }
    }

    #[test]
    fn directional_derivative_is_first_order() {
        let g = Grid::line(32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let nm = &models(&g)[0];
        let y = random_field(&g, &mut rng, 1.0);
        let z = random_field(&g, &mut rng, 1.0);
        let base = nm.apply_b_modes(&y);
        let exact = nm.apply_db_modes(&y, &z);
        let mut errs = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let mut yp = y.clone();
            yp.axpy(eps, &z);
            let e: f64 = nm
                .apply_b_modes(&yp)
                .iter()
                .zip(&base)
                .zip(&exact)
                .map(|((p, b), d)| {
                    let r = p.sub(b).scaled(1.0 / eps).sub(d);
                    inner_h(&r, &r)
                })
                .sum::<f64>()
                .sqrt();
            errs.push(e);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 8.0 && ratio < 12.0, "ratio {ratio}");
        }
    }

    #[test]
    fn v_bound_is_finite() {
        let g = Grid::line(32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Field> = (0..50).map(|_| Field::cosine_mode(&g, &[3]).scaled(rng.random_range(-5.0..5.0))).collect();
        for nm in models(&g) {
            let r = nm.probe_v_bound(&samples);
            assert!(r.is_finite() && r > 0.0);
        }
    }

    #[test]
    fn empty_model() {
        let g = Grid::line(8, 1.0).unwrap();
        let nm = NoiseModel::none(&g);
        assert_eq!(nm.nmodes(), 0);
        assert!(nm.is_mean_free());
        assert_eq!(nm.apply_b(&Field::constant(&g, 1.0), &[]).unwrap(), Field::zeros(&g));
    }
}
