//! Run configuration: a TOML subset of `key = value` lines under `[section]`
//! headers. Every key is optional; the defaults reproduce the desk-scale
//! setup (1D, 64 cells on `[0, 1]`, `T = 0.05`, 200 steps, two
//! multiplicative modes with `σ = 0.1`).
//!
//! | section       | key                | default               |
//! |---------------|--------------------|-----------------------|
//! | `grid`        | `ndims`            | `1`                   |
//! |               | `npoints`          | `64` (scalar or per axis) |
//! |               | `lengths`          | `1.0` (scalar or per axis) |
//! | `time`        | `final_time`       | `0.05`                |
//! |               | `nsteps`           | `200`                 |
//! | `potential`   | `kind`             | `"double_well"` (`"quadratic"`, `"polynomial"`) |
//! |               | `c1`, `c2`         | per kind (`1`, `3` for the double well) |
//! |               | `curvature`        | `1.0` (quadratic)     |
//! |               | `coefficients`     | `[]` (polynomial, ascending powers) |
//! | `noise`       | `kind`             | `"multiplicative"` (`"additive"`) |
//! |               | `shape`            | `"tanh"` (`"linear"`) |
//! |               | `nmodes`           | `2`                   |
//! |               | `sigma`            | `0.1` (scalar or per mode) |
//! |               | `modes`            | lowest `nmodes` cosine modes |
//! |               | `allow_mean_mode`, `allow_linear_shape` | `false` |
//! | `initial`     | `mean`, `modes`, `amplitudes` | `0`, `[1, 2]`, `[0.5, 0.3]` |
//! | `control`     | `radius`           | `10.0`                |
//! |               | `init`             | `{}` (zero control)   |
//! | `cost`        | `alpha1`, `alpha2`, `alpha3` | `1`, `1`, `0.01` |
//! |               | `target`           | `"constant"` (`"snapshot"`, `"synthetic"`) |
//! |               | `x_q`, `x_t`       | `{}` (zero profiles)  |
//! |               | `x_q_file`, `x_t_file` | unset (snapshot targets) |
//! |               | `reference`        | `{ modes = [1], amplitudes = [1.0] }` (synthetic) |
//! | `ensemble`    | `npaths`           | `16`                  |
//! |               | `base_seed`        | `20240607`            |
//! | `solver`      | `stabilization`    | `2.0`                 |
//! |               | `backend`          | `"discrete_transpose"` (`"continuous"`) |
//! |               | `truncation`       | unset (no clamp)      |
//! | `optimizer`   | `tol`, `max_iter`  | `1e-6`, `500`         |
//! |               | `armijo_c`, `shrink`, `initial_step`, `max_backtracks` | `1e-4`, `0.5`, `1.0`, `40` |
//! | `verify`      | see [`VerifySection`] |                     |
//! | `output`      | `dir`              | `"out"`               |
//! |               | `snapshot_stride`  | `0` (final state only) |
//!
//! A profile (`[initial]`, `init`, `x_q`, `x_t`, `reference`) is
//! `mean + Σ amplitudes[j] · cos-mode(modes[j])`; a mode is one wavenumber
//! (first axis) or a list with one wavenumber per axis. Profiles inside other
//! sections are inline tables, e.g. `x_q = { mean = 0.1, modes = [2], amplitudes = [0.4] }`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControlProcess, CostWeights, Ensemble, EnsembleSpec, OptimizerOptions, Targets, TrackingTarget};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::physics::{ModeSpec, NoiseKind, NoiseModel, NoiseOverrides, NoiseShape, Potential, TruncationLevel};
use crate::sensitivity::AdjointBackend;
use crate::state::{StateSolver, TimeGrid};

/// A scalar applied to every axis (or mode), or one value each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    /// Expands to exactly `n` values.
    pub fn expand(&self, n: usize) -> std::result::Result<Vec<T>, String> {
        match self {
            OneOrMany::One(x) => Ok(vec![x.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(format!("expected {n} values, got {}", v.len())),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        match self {
            OneOrMany::One(x) => std::slice::from_ref(x),
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub ndims: usize,
    pub npoints: OneOrMany<usize>,
    pub lengths: OneOrMany<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            ndims: 1,
            npoints: OneOrMany::One(64),
            lengths: OneOrMany::One(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub final_time: f64,
    pub nsteps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            final_time: 0.05,
            nsteps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    DoubleWell,
    Quadratic,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    pub curvature: f64,
    pub coefficients: Vec<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialKind::DoubleWell,
            c1: None,
            c2: None,
            curvature: 1.0,
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub shape: NoiseShape,
    pub nmodes: usize,
    pub sigma: OneOrMany<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<OneOrMany<usize>>>,
    pub allow_mean_mode: bool,
    pub allow_linear_shape: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Multiplicative,
            shape: NoiseShape::Tanh,
            nmodes: 2,
            sigma: OneOrMany::One(0.1),
            modes: None,
            allow_mean_mode: false,
            allow_linear_shape: false,
        }
    }
}

/// `mean + Σ_j amplitudes[j] · cos-mode(modes[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Profile {
    pub mean: f64,
    pub modes: Vec<OneOrMany<usize>>,
    pub amplitudes: Vec<f64>,
}

impl Profile {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            ..Self::default()
        }
    }

    pub fn cosine(mean: f64, terms: &[(&[usize], f64)]) -> Self {
        Self {
            mean,
            modes: terms.iter().map(|(k, _)| OneOrMany::Many(k.to_vec())).collect(),
            amplitudes: terms.iter().map(|(_, a)| *a).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mean == 0.0 && self.amplitudes.iter().all(|&a| a == 0.0)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.modes.len() != self.amplitudes.len() {
            return Err(format!(
                "{} modes but {} amplitudes",
                self.modes.len(),
                self.amplitudes.len()
            ));
        }
        if !self.mean.is_finite() || self.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err("profile values must be finite".into());
        }
        Ok(())
    }

    pub fn field(&self, grid: &Arc<Grid>) -> Result<Field> {
        self.check().map_err(Error::Config)?;
        let mut f = Field::constant(grid, self.mean);
        for (k, &a) in self.modes.iter().zip(&self.amplitudes) {
            let k = k.as_slice();
            if k.len() > grid.ndims() {
                return Err(Error::Config(format!(
                    "profile mode {k:?} has more wavenumbers than axes"
                )));
            }
            f.axpy(a, &Field::cosine_mode(grid, k));
        }
        Ok(f)
    }
}

fn default_initial() -> Profile {
    Profile::cosine(0.0, &[(&[1], 0.5), (&[2], 0.3)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Radius `C0` of the admissible `L²(Q)` ball.
    pub radius: f64,
    /// Initial control, constant in time.
    pub init: Profile,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            radius: 10.0,
            init: Profile::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Constant,
    Snapshot,
    /// Trajectories of a reference control on the ensemble's own paths.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub target: TargetKind,
    pub x_q: Profile,
    pub x_t: Profile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_q_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_t_file: Option<PathBuf>,
    /// Reference control (constant in time) for synthetic targets.
    pub reference: Profile,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.01,
            target: TargetKind::Constant,
            x_q: Profile::default(),
            x_t: Profile::default(),
            x_q_file: None,
            x_t_file: None,
            reference: Profile::cosine(0.0, &[(&[1], 1.0)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub npaths: usize,
    pub base_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            npaths: 16,
            base_seed: 20240607,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub stabilization: f64,
    pub backend: AdjointBackend,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            stabilization: 2.0,
            backend: AdjointBackend::DiscreteTranspose,
            truncation: None,
        }
    }
}

/// Sizes of the verification sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Names of the checks to run; empty runs all of them.
    pub checks: Vec<String>,
    /// Paths per check (the mass check uses `ensemble.npaths`).
    pub npaths: usize,
    pub gateaux_eps: Vec<f64>,
    pub duality_pairs: usize,
    pub gradient_problems: usize,
    pub lipschitz_pairs: usize,
    /// Step counts of the backend-consistency sweep, increasing.
    pub backend_nsteps: Vec<usize>,
    pub truncation_levels: Vec<f64>,
    /// Number of dyadic refinements beyond the base resolution.
    pub moment_refinements: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            npaths: 4,
            gateaux_eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            duality_pairs: 20,
            gradient_problems: 10,
            lipschitz_pairs: 5,
            backend_nsteps: vec![100, 200, 400, 800],
            truncation_levels: vec![0.5, 1.0, 2.0, 4.0, 8.0, 64.0],
            moment_refinements: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write every `snapshot_stride`-th state; 0 writes the final state only.
    pub snapshot_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub potential: PotentialSection,
    pub noise: NoiseSection,
    pub initial: Profile,
    pub control: ControlSection,
    pub cost: CostSection,
    pub ensemble: EnsembleSection,
    pub solver: SolverSection,
    pub optimizer: OptimizerOptions,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            time: TimeSection::default(),
            potential: PotentialSection::default(),
            noise: NoiseSection::default(),
            initial: default_initial(),
            control: ControlSection::default(),
            cost: CostSection::default(),
            ensemble: EnsembleSection::default(),
            solver: SolverSection::default(),
            optimizer: OptimizerOptions::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }
}

/// A constraint violation tied to a config key.
struct Invalid {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn invalid(section: &'static str, key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid {
        section,
        key,
        message: message.into(),
    }
}

fn positive(section: &'static str, key: &'static str, x: f64) -> std::result::Result<(), Invalid> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(section, key, format!("must be positive and finite, got {x}")))
    }
}

fn nonnegative(section: &'static str, key: &'static str, x: f64) -> std::result::Result<(), Invalid> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(section, key, format!("must be nonnegative and finite, got {x}")))
    }
}

/// Parses and validates a config. Errors carry the 1-based line of the
/// offending key when it appears in `text`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate().map_err(|v| Error::Parse {
        line: locate(text, v.section, v.key),
        message: format!("[{}] {}: {}", v.section, v.key, v.message),
    })?;
    Ok(cfg)
}

/// Serialises to the same text format; `parse_config` of the result equals `cfg`.
pub fn serialize_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, falling back to the section header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

impl RunConfig {
    fn validate(&self) -> std::result::Result<(), Invalid> {
        let g = &self.grid;
        if !(g.ndims == 1 || g.ndims == 2) {
            return Err(invalid("grid", "ndims", format!("must be 1 or 2, got {}", g.ndims)));
        }
        let npoints = g.npoints.expand(g.ndims).map_err(|m| invalid("grid", "npoints", m))?;
        if let Some(n) = npoints.iter().find(|&&n| n < 4) {
            return Err(invalid("grid", "npoints", format!("need at least 4 points per axis, got {n}")));
        }
        for l in g.lengths.expand(g.ndims).map_err(|m| invalid("grid", "lengths", m))? {
            positive("grid", "lengths", l)?;
        }
        positive("time", "final_time", self.time.final_time)?;
        if self.time.nsteps == 0 {
            return Err(invalid("time", "nsteps", "need at least one step"));
        }

        let p = &self.potential;
        if let Some(c1) = p.c1 {
            nonnegative("potential", "c1", c1)?;
        }
        if let Some(c2) = p.c2 {
            positive("potential", "c2", c2)?;
        }
        match p.kind {
            PotentialKind::Quadratic => nonnegative("potential", "curvature", p.curvature)?,
            PotentialKind::Polynomial if p.coefficients.is_empty() => {
                return Err(invalid("potential", "coefficients", "polynomial potential needs coefficients"));
            }
            _ => {}
        }

        let n = &self.noise;
        for s in n.sigma.expand(n.nmodes).map_err(|m| invalid("noise", "sigma", m))? {
            nonnegative("noise", "sigma", s)?;
        }
        if let Some(modes) = &n.modes {
            if modes.len() != n.nmodes {
                return Err(invalid(
                    "noise",
                    "modes",
                    format!("{} modes listed but nmodes = {}", modes.len(), n.nmodes),
                ));
            }
            if let Some(m) = modes.iter().find(|m| m.as_slice().len() > g.ndims) {
                return Err(invalid("noise", "modes", format!("mode {:?} has more wavenumbers than axes", m.as_slice())));
            }
        }
        if n.shape == NoiseShape::Linear && n.kind == NoiseKind::Multiplicative && !n.allow_linear_shape {
            return Err(invalid("noise", "shape", "linear multiplicative shape needs allow_linear_shape = true"));
        }

        self.initial.check().map_err(|m| invalid("initial", "modes", m))?;
        positive("control", "radius", self.control.radius)?;
        self.control.init.check().map_err(|m| invalid("control", "init", m))?;

        let c = &self.cost;
        nonnegative("cost", "alpha1", c.alpha1)?;
        nonnegative("cost", "alpha2", c.alpha2)?;
        nonnegative("cost", "alpha3", c.alpha3)?;
        c.x_q.check().map_err(|m| invalid("cost", "x_q", m))?;
        c.x_t.check().map_err(|m| invalid("cost", "x_t", m))?;
        c.reference.check().map_err(|m| invalid("cost", "reference", m))?;
        if c.target == TargetKind::Snapshot && c.x_q_file.is_none() && c.x_t_file.is_none() {
            return Err(invalid("cost", "target", "snapshot targets need x_q_file or x_t_file"));
        }

        if self.ensemble.npaths == 0 {
            return Err(invalid("ensemble", "npaths", "need at least one path"));
        }
        let c1 = self.potential().map(|p| p.c1()).unwrap_or(0.0);
        let s = self.solver.stabilization;
        if !(s >= c1 && s.is_finite()) {
            return Err(invalid(
                "solver",
                "stabilization",
                format!("must be finite and at least c1 = {c1}, got {s}"),
            ));
        }
        if let Some(t) = self.solver.truncation {
            positive("solver", "truncation", t)?;
        }

        let o = &self.optimizer;
        nonnegative("optimizer", "tol", o.tol)?;
        if !(o.armijo_c > 0.0 && o.armijo_c < 1.0) {
            return Err(invalid("optimizer", "armijo_c", format!("must lie in (0, 1), got {}", o.armijo_c)));
        }
        if !(o.shrink > 0.0 && o.shrink < 1.0) {
            return Err(invalid("optimizer", "shrink", format!("must lie in (0, 1), got {}", o.shrink)));
        }
        positive("optimizer", "initial_step", o.initial_step)?;

        let v = &self.verify;
        for name in &v.checks {
            if !crate::verify::CHECK_NAMES.contains(&name.as_str()) {
                return Err(invalid(
                    "verify",
                    "checks",
                    format!("unknown check {name:?}; known: {}", crate::verify::CHECK_NAMES.join(", ")),
                ));
            }
        }
        if v.npaths == 0 {
            return Err(invalid("verify", "npaths", "need at least one path"));
        }
        if v.gateaux_eps.len() < 2 || v.gateaux_eps.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(invalid("verify", "gateaux_eps", "need at least two positive, strictly decreasing values"));
        }
        if v.backend_nsteps.len() < 2 || v.backend_nsteps.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
            return Err(invalid(
                "verify",
                "backend_nsteps",
                "need at least two increasing step counts, each dividing the next",
            ));
        }
        if v.truncation_levels.is_empty() || v.truncation_levels.windows(2).any(|w| !(w[0] < w[1])) || v.truncation_levels[0] <= 0.0 {
            return Err(invalid("verify", "truncation_levels", "need positive, strictly increasing levels"));
        }
        if v.moment_refinements == 0 {
            return Err(invalid("verify", "moment_refinements", "need at least one refinement"));
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(|v| Error::Config(format!("[{}] {}: {}", v.section, v.key, v.message)))?;
        Ok(self)
    }

    /// Hex SHA-256 of the serialised config.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serialize_config(self)?.as_bytes())))
    }

    /// Same setup with `space` times as many cells per axis and `time` times as many steps.
    pub fn refined(&self, space: usize, time: usize) -> Self {
        let mut c = self.clone();
        c.grid.npoints = match &c.grid.npoints {
            OneOrMany::One(n) => OneOrMany::One(n * space),
            OneOrMany::Many(v) => OneOrMany::Many(v.iter().map(|n| n * space).collect()),
        };
        c.time.nsteps *= time;
        c
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let npoints = self.grid.npoints.expand(self.grid.ndims).map_err(Error::Config)?;
        let lengths = self.grid.lengths.expand(self.grid.ndims).map_err(Error::Config)?;
        Grid::new(&npoints, &lengths)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.final_time, self.time.nsteps)
    }

    pub fn potential(&self) -> Result<Potential> {
        let p = &self.potential;
        let base = match p.kind {
            PotentialKind::DoubleWell => Potential::double_well(),
            PotentialKind::Quadratic => Potential::quadratic(p.curvature)?,
            PotentialKind::Polynomial => Potential::polynomial(p.coefficients.clone(), 0.0, 1.0)?,
        };
        if p.c1.is_none() && p.c2.is_none() && p.kind != PotentialKind::Polynomial {
            return Ok(base);
        }
        let (c1, c2) = (p.c1.unwrap_or(base.c1()), p.c2.unwrap_or(base.c2()));
        base.with_constants(c1, c2)
    }

    /// The lowest `nmodes` nonconstant cosine modes, ordered by `|k|²` then
    /// lexicographically; used when `noise.modes` is unset.
    pub fn default_noise_modes(ndims: usize, nmodes: usize) -> Vec<Vec<usize>> {
        let kmax = nmodes + 1;
        let mut ks: Vec<Vec<usize>> = if ndims == 1 {
            (1..=kmax).map(|k| vec![k]).collect()
        } else {
            (0..=kmax)
                .flat_map(|a| (0..=kmax).map(move |b| vec![a, b]))
                .filter(|k| k.iter().any(|&x| x > 0))
                .collect()
        };
        ks.sort_by_key(|k| (k.iter().map(|x| x * x).sum::<usize>(), k.clone()));
        ks.truncate(nmodes);
        ks
    }

    pub fn noise_modes(&self) -> Result<Vec<ModeSpec>> {
        let n = &self.noise;
        let sigmas = n.sigma.expand(n.nmodes).map_err(Error::Config)?;
        let wavenumbers: Vec<Vec<usize>> = match &n.modes {
            Some(m) => m.iter().map(|k| k.as_slice().to_vec()).collect(),
            None => Self::default_noise_modes(self.grid.ndims, n.nmodes),
        };
        Ok(wavenumbers
            .iter()
            .zip(sigmas)
            .map(|(k, s)| ModeSpec::new(k, s))
            .collect())
    }

    pub fn noise_model(&self, grid: &Arc<Grid>) -> Result<NoiseModel> {
        if self.noise.nmodes == 0 {
            return Ok(NoiseModel::none(grid));
        }
        NoiseModel::new(
            grid,
            self.noise.kind,
            self.noise.shape,
            &self.noise_modes()?,
            NoiseOverrides {
                allow_mean_mode: self.noise.allow_mean_mode,
                allow_linear_shape: self.noise.allow_linear_shape,
            },
        )
    }

    pub fn solver(&self) -> Result<StateSolver> {
        let grid = self.build_grid()?;
        let noise = self.noise_model(&grid)?;
        StateSolver::new(&grid, self.potential()?, noise, self.time_grid()?, self.solver.stabilization)
    }

    pub fn initial_state(&self, grid: &Arc<Grid>) -> Result<Field> {
        self.initial.field(grid)
    }

    pub fn initial_control(&self, grid: &Arc<Grid>) -> Result<ControlProcess> {
        Ok(ControlProcess::constant_in_time(&self.control.init.field(grid)?, self.time_grid()?))
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::new(self.cost.alpha1, self.cost.alpha2, self.cost.alpha3)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        EnsembleSpec::new(self.ensemble.npaths, self.ensemble.base_seed)
    }

    pub fn truncation(&self) -> Result<TruncationLevel> {
        self.solver.truncation.map_or(Ok(TruncationLevel::NONE), TruncationLevel::new)
    }

    /// Tracking targets for `ensemble`. Relative snapshot paths resolve
    /// against `base_dir`; a missing file falls back to the profile.
    pub fn targets(&self, solver: &StateSolver, ensemble: &Ensemble, base_dir: &Path) -> Result<Targets> {
        let grid = solver.grid();
        let n = solver.time().nsteps();
        let c = &self.cost;
        match c.target {
            TargetKind::Constant => Ok(Targets::Shared(TrackingTarget::constant(&c.x_q.field(grid)?, &c.x_t.field(grid)?, n))),
            TargetKind::Snapshot => {
                let load = |file: &Option<PathBuf>, fallback: &Profile| match file {
                    Some(f) => crate::io::read_snapshot(base_dir.join(f), grid),
                    None => fallback.field(grid),
                };
                Ok(Targets::Shared(TrackingTarget::constant(&load(&c.x_q_file, &c.x_q)?, &load(&c.x_t_file, &c.x_t)?, n)))
            }
            TargetKind::Synthetic => {
                let reference = ControlProcess::constant_in_time(&c.reference.field(grid)?, *solver.time());
                Targets::synthetic(solver, &self.initial_state(grid)?, &reference, ensemble)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.time_grid().unwrap().tau(), 0.05 / 200.0);
        let solver = cfg.solver().unwrap();
        assert_eq!(solver.grid().dims(), &[64]);
        assert_eq!(solver.noise().nmodes(), 2);
        assert_eq!(solver.noise().amplitudes(), vec![0.1, 0.1]);
    }

    #[test]
    fn negative_alpha_reports_line_and_rule() {
        let text = "[grid]\nnpoints = 32\n\n[cost]\nalpha1 = 1.0\nalpha3 = -1\n";
        match parse_config(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, Some(6));
                assert!(message.contains("alpha3") && message.contains("nonnegative"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_type_errors_are_located() {
        match parse_config("[time]\nnsteps = 10\nbogus = 1\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, Some(3));
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("[time]\n\nnsteps = \"ten\"\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("[nosuch]\n"), Err(Error::Parse { line: Some(1), .. })));
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[grid]
ndims = 2
npoints = [16, 8]
lengths = [1.0, 0.5]

[time]
final_time = 0.02
nsteps = 40

[potential]
kind = "polynomial"
coefficients = [0.0, 0.0, 0.5, 0.0, 0.1]
c1 = 0.0
c2 = 2.0

[noise]
kind = "additive"
nmodes = 3
sigma = [0.1, 0.2, 0.05]
modes = [1, [0, 1], [2, 1]]

[initial]
mean = 0.1
modes = [[1, 0]]
amplitudes = [0.4]

[control]
radius = 3.5
init = { mean = 0.0, modes = [2], amplitudes = [0.1] }

[cost]
alpha1 = 2.0
alpha2 = 0.5
alpha3 = 0.1
target = "synthetic"
reference = { modes = [[1, 1]], amplitudes = [0.7] }

[ensemble]
npaths = 6
base_seed = 99

[solver]
stabilization = 3.0
backend = "continuous"
truncation = 12.0

[optimizer]
tol = 1e-8
max_iter = 20

[verify]
checks = ["mass_conservation", "duality"]
npaths = 2

[output]
dir = "results"
snapshot_stride = 5
"#;
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&serialize_config(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest().unwrap(), again.digest().unwrap());
        let solver = cfg.solver().unwrap();
        assert_eq!(solver.grid().dims(), &[16, 8]);
        assert_eq!(cfg.truncation().unwrap().level(), 12.0);
        let default_text = serialize_config(&RunConfig::default()).unwrap();
        assert_eq!(parse_config(&default_text).unwrap(), RunConfig::default());
    }

    #[test]
    fn constraint_violations() {
        for (text, key) in [
            ("[grid]\nnpoints = 3\n", "npoints"),
            ("[grid]\nndims = 3\n", "ndims"),
            ("[time]\nfinal_time = 0.0\n", "final_time"),
            ("[noise]\nnmodes = 2\nsigma = [0.1]\n", "sigma"),
            ("[solver]\nstabilization = 0.5\n", "stabilization"),
            ("[control]\nradius = -1\n", "radius"),
            ("[optimizer]\nshrink = 1.0\n", "shrink"),
            ("[cost]\ntarget = \"snapshot\"\n", "target"),
            ("[verify]\nchecks = [\"nope\"]\n", "checks"),
        ] {
            match parse_config(text) {
                Err(Error::Parse { line: Some(_), message }) => assert!(message.contains(key), "{message}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn default_modes_are_low_and_nonconstant() {
        assert_eq!(RunConfig::default_noise_modes(1, 3), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(
            RunConfig::default_noise_modes(2, 4),
            vec![vec![0, 1], vec![1, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn refinement_scales_resolution() {
        let r = RunConfig::default().refined(2, 4);
        assert_eq!(r.build_grid().unwrap().dims(), &[128]);
        assert_eq!(r.time.nsteps, 800);
    }
}
