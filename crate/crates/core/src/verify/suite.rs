use std::sync::Arc;

use rayon::prelude::*;

use crate::control::{ControlProblem, ControlProcess, Ensemble, EnsembleSpec, Targets, TrackingTarget};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{OneOrMany, PotentialKind, Profile, RunConfig};
use crate::physics::{NoiseKind, TruncationLevel};
use crate::sensitivity::AdjointBackend;
use crate::state::TimeGrid;

use super::checks::*;
use super::random::SmoothRandom;
use super::report::{CheckReport, SuiteReport};

/// Check names accepted by `verify.checks` and the `verify` subcommand.
pub const CHECK_NAMES: &[&str] = &[
    "mass_conservation",
    "constant_state",
    "energy_dissipation",
    "gateaux",
    "gateaux_linear",
    "duality",
    "backend_consistency",
    "gradient_exactness",
    "optimizer",
    "truncation",
    "lipschitz",
    "moment_bounds",
];

/// Weights of the synthetic optimisation problem used by the `optimizer`
/// check: strong tracking so that the cost drops well below its initial
/// value, and unit control cost so that the projected gradient step of size 1
/// is the stationarity map itself.
pub const SYNTHETIC_WEIGHTS: [f64; 3] = [2000.0, 20.0, 1.0];

/// Noise amplitude of the stability negative controls.
pub const LOUD_NOISE: f64 = 1e3;

// Independent random streams per check, mixed with the base seed.
const STREAM_ENERGY: u64 = 1;
const STREAM_GATEAUX: u64 = 2;
const STREAM_DUALITY: u64 = 3;
const STREAM_BACKEND: u64 = 4;
const STREAM_GRADIENT: u64 = 5;
const STREAM_TRUNCATION: u64 = 6;
const STREAM_LIPSCHITZ: u64 = 7;

fn stream(cfg: &RunConfig, id: u64) -> u64 {
    cfg.ensemble.base_seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn verify_spec(cfg: &RunConfig) -> Result<EnsembleSpec> {
    EnsembleSpec::new(cfg.verify.npaths, cfg.ensemble.base_seed)
}

fn smooth(cfg: &RunConfig, id: u64, index: u64, scale: f64) -> SmoothRandom {
    SmoothRandom::keyed(stream(cfg, id), index, cfg.grid.ndims, 4, 3, scale)
}

fn with_noise_kind(cfg: &RunConfig, kind: NoiseKind) -> RunConfig {
    let mut c = cfg.clone();
    c.noise.kind = kind;
    if c.noise.nmodes == 0 {
        c.noise.nmodes = 2;
    }
    c
}

fn deterministic(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.noise.nmodes = 0;
    c.noise.modes = None;
    c.noise.sigma = OneOrMany::One(0.0);
    c
}

struct Base {
    grid: Arc<Grid>,
    tg: TimeGrid,
}

fn base(cfg: &RunConfig) -> Result<Base> {
    Ok(Base {
        grid: cfg.build_grid()?,
        tg: cfg.time_grid()?,
    })
}

fn constant_target(cfg: &RunConfig, grid: &Arc<Grid>, n: usize) -> Result<TrackingTarget> {
    Ok(TrackingTarget::constant(&cfg.cost.x_q.field(grid)?, &cfg.cost.x_t.field(grid)?, n))
}

fn mass(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let solver = cfg.solver()?;
    let y0 = cfg.initial_state(&b.grid)?;
    let u = cfg.initial_control(&b.grid)?;
    let ens = Ensemble::new(cfg.ensemble_spec()?, solver.noise().nmodes(), &b.tg);
    let good = check_mass_conservation(&solver, &y0, &u, &ens);

    let mut bad_cfg = cfg.clone();
    bad_cfg.noise.kind = NoiseKind::Additive;
    bad_cfg.noise.nmodes = 1;
    bad_cfg.noise.sigma = OneOrMany::One(0.1);
    bad_cfg.noise.modes = Some(vec![OneOrMany::One(0)]);
    bad_cfg.noise.allow_mean_mode = true;
    let bad_solver = bad_cfg.solver()?;
    let bad_ens = Ensemble::new(verify_spec(cfg)?, 1, &b.tg);
    let bad = check_mass_conservation(&bad_solver, &y0, &u, &bad_ens);
    Ok(vec![good, CheckReport::negative_control(bad, "additive noise with a constant mode")])
}

fn constant_state(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let good = check_constant_state(&deterministic(cfg).solver()?, 0.3);
    let mut noisy = with_noise_kind(cfg, NoiseKind::Multiplicative);
    noisy.noise.sigma = OneOrMany::One(0.1);
    let bad = check_constant_state(&noisy.solver()?, 0.3);
    Ok(vec![good, CheckReport::negative_control(bad, "multiplicative noise switched on")])
}

fn energy(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let y0 = smooth(cfg, STREAM_ENERGY, 0, 0.4).field(&b.grid);
    let good = check_energy_dissipation(&deterministic(cfg).solver()?, &y0, 0);
    let mut noisy = with_noise_kind(cfg, NoiseKind::Additive);
    noisy.noise.sigma = OneOrMany::One(0.1);
    let bad = check_energy_dissipation(&noisy.solver()?, &y0, stream(cfg, STREAM_ENERGY));
    Ok(vec![good, CheckReport::negative_control(bad, "additive noise injects energy")])
}

fn gateaux(cfg: &RunConfig, linear: bool) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let mut c = cfg.clone();
    if linear {
        c = with_noise_kind(&c, NoiseKind::Additive);
        c.potential.kind = PotentialKind::Quadratic;
        c.potential.curvature = 1.0;
        c.potential.c1 = None;
        c.potential.c2 = None;
    }
    let solver = c.solver()?;
    let y0 = c.initial_state(&b.grid)?;
    let mut u = c.initial_control(&b.grid)?;
    u.axpy(1.0, &smooth(cfg, STREAM_GATEAUX, 0, 0.5).control(&b.grid, b.tg));
    let h = smooth(cfg, STREAM_GATEAUX, 1, 1.0).control(&b.grid, b.tg);
    let ens = Ensemble::new(verify_spec(cfg)?, solver.noise().nmodes(), &b.tg);
    let eps = &cfg.verify.gateaux_eps;
    if linear {
        let r = check_gateaux(&solver, &y0, &u, &h, eps, &ens, TruncationLevel::NONE, GateauxMode::ExactlyLinear)?;
        return Ok(vec![r]);
    }
    let good = check_gateaux(&solver, &y0, &u, &h, eps, &ens, TruncationLevel::NONE, GateauxMode::Differentiable)?;
    // A derivative computed with an active curvature clamp is the wrong derivative.
    let bad = check_gateaux(&solver, &y0, &u, &h, eps, &ens, TruncationLevel::new(0.05)?, GateauxMode::Differentiable)?;
    Ok(vec![good, CheckReport::negative_control(bad, "linearisation with curvature clamped at 0.05")])
}

fn duality(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let y0 = cfg.initial_state(&b.grid)?;
    let mut u = cfg.initial_control(&b.grid)?;
    u.axpy(1.0, &smooth(cfg, STREAM_DUALITY, 1_000_000, 0.5).control(&b.grid, b.tg));
    let target = constant_target(cfg, &b.grid, b.tg.nsteps())?;
    let weights = cfg.weights()?;
    let directions: Vec<ControlProcess> = (0..cfg.verify.duality_pairs as u64)
        .map(|j| smooth(cfg, STREAM_DUALITY, j, 1.0).control(&b.grid, b.tg))
        .collect();
    let mut out = Vec::new();
    for (kind, tag) in [(NoiseKind::Additive, "additive"), (NoiseKind::Multiplicative, "multiplicative")] {
        let solver = with_noise_kind(cfg, kind).solver()?;
        let ens = Ensemble::new(verify_spec(cfg)?, solver.noise().nmodes(), &b.tg);
        let mut r = check_duality(&solver, &y0, &u, &target, &weights, &ens, &directions, AdjointBackend::DiscreteTranspose);
        r.name = format!("duality.{tag}");
        out.push(r);
        if kind == NoiseKind::Multiplicative {
            let mut bad = check_duality(&solver, &y0, &u, &target, &weights, &ens, &directions[..directions.len().min(4)], AdjointBackend::Continuous);
            bad.name = format!("duality.{tag}");
            out.push(CheckReport::negative_control(bad, "continuous backend at a fixed step"));
        }
    }
    Ok(out)
}

fn backend_consistency(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let solver = with_noise_kind(cfg, NoiseKind::Additive).solver()?;
    let y0 = cfg.initial_state(&b.grid)?;
    let control = smooth(cfg, STREAM_BACKEND, 0, 0.5);
    let direction = smooth(cfg, STREAM_BACKEND, 1, 1.0);
    let r = check_backend_consistency(
        &solver,
        &y0,
        &control,
        &direction,
        &cfg.cost.x_q.field(&b.grid)?,
        &cfg.cost.x_t.field(&b.grid)?,
        &cfg.weights()?,
        verify_spec(cfg)?,
        &cfg.verify.backend_nsteps,
    )?;
    Ok(vec![r])
}

fn gradient(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let solver = cfg.solver()?;
    let y0 = cfg.initial_state(&b.grid)?;
    let ens = Ensemble::new(verify_spec(cfg)?, solver.noise().nmodes(), &b.tg);
    let weights = cfg.weights()?;
    let cases = (0..cfg.verify.gradient_problems as u64)
        .map(|j| {
            let x_q = smooth(cfg, STREAM_GRADIENT, 3 * j, 0.5).field(&b.grid);
            let x_t = smooth(cfg, STREAM_GRADIENT, 3 * j + 1, 0.5).field(&b.grid);
            let target = TrackingTarget::constant(&x_q, &x_t, b.tg.nsteps());
            let problem = ControlProblem::new(solver.clone(), y0.clone(), weights, Targets::Shared(target), cfg.control.radius)?;
            let control = smooth(cfg, STREAM_GRADIENT, 3 * j + 2, 0.5).control(&b.grid, b.tg);
            let direction = smooth(cfg, STREAM_GRADIENT, 1_000_000 + j, 1.0).control(&b.grid, b.tg);
            Ok(GradientCase {
                problem,
                ensemble: ens.clone(),
                control,
                direction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![check_gradient_exactness(&cases)])
}

/// The synthetic-target problem of the `optimizer` check: targets are the
/// trajectories of the configured reference control on each path.
pub fn synthetic_problem(cfg: &RunConfig) -> Result<(ControlProblem, Ensemble)> {
    let b = base(cfg)?;
    let solver = cfg.solver()?;
    let y0 = cfg.initial_state(&b.grid)?;
    let ens = Ensemble::new(verify_spec(cfg)?, solver.noise().nmodes(), &b.tg);
    let reference = ControlProcess::constant_in_time(&cfg.cost.reference.field(&b.grid)?, b.tg);
    if reference.norm() > cfg.control.radius {
        return Err(Error::Config(format!(
            "reference control norm {} exceeds the admissible radius {}",
            reference.norm(),
            cfg.control.radius
        )));
    }
    let targets = Targets::synthetic(&solver, &y0, &reference, &ens)?;
    let [a1, a2, a3] = SYNTHETIC_WEIGHTS;
    let weights = crate::control::CostWeights::new(a1, a2, a3)?;
    let problem = ControlProblem::new(solver, y0, weights, targets, cfg.control.radius)?;
    Ok((problem, ens))
}

fn optimizer(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let (problem, ens) = synthetic_problem(cfg)?;
    let u0 = ControlProcess::zeros(problem.solver().grid(), *problem.solver().time());
    let good = check_optimizer(&problem, &ens, &u0, &cfg.optimizer);
    let mut crippled = cfg.optimizer;
    crippled.max_iter = 1;
    let bad = check_optimizer(&problem, &ens, &u0, &crippled);
    Ok(vec![good, CheckReport::negative_control(bad, "a single iteration")])
}

fn truncation(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let b = base(cfg)?;
    let solver = cfg.solver()?;
    let y0 = cfg.initial_state(&b.grid)?;
    let u = cfg.initial_control(&b.grid)?;
    let h = smooth(cfg, STREAM_TRUNCATION, 0, 1.0).control(&b.grid, b.tg);
    let ens = Ensemble::new(verify_spec(cfg)?, solver.noise().nmodes(), &b.tg);
    Ok(vec![check_truncation(&solver, &y0, &u, &h, &cfg.verify.truncation_levels, &ens)?])
}

fn resolution(cfg: &RunConfig) -> Result<Resolution> {
    let grid = cfg.build_grid()?;
    Ok(Resolution {
        solver: cfg.solver()?,
        y0: cfg.initial_state(&grid)?,
    })
}

fn lipschitz(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let pairs: Vec<(SmoothRandom, SmoothRandom)> = (0..cfg.verify.lipschitz_pairs as u64)
        .map(|j| (smooth(cfg, STREAM_LIPSCHITZ, 2 * j, 1.0), smooth(cfg, STREAM_LIPSCHITZ, 2 * j + 1, 1.0)))
        .collect();
    let spec = verify_spec(cfg)?;
    let good = check_lipschitz(&resolution(cfg)?, &resolution(&cfg.refined(2, 2))?, &pairs, spec)?;
    let loud = loud_config(cfg);
    let bad = check_lipschitz(&resolution(&loud)?, &resolution(&loud.refined(2, 2))?, &pairs, spec)?;
    Ok(vec![good, CheckReport::negative_control(bad, "noise amplitude 1e3 at a coarse step")])
}

/// Multiplicative noise of amplitude [`LOUD_NOISE`] on ten times coarser steps.
fn loud_config(cfg: &RunConfig) -> RunConfig {
    let mut c = with_noise_kind(cfg, NoiseKind::Multiplicative);
    c.noise.sigma = OneOrMany::One(LOUD_NOISE);
    c.time.nsteps = (c.time.nsteps / 10).max(1);
    c
}

fn moments(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let run = |c: &RunConfig| -> Result<CheckReport> {
        let levels = (0..=c.verify.moment_refinements)
            .map(|r| resolution(&c.refined(1 << r, 1 << r)))
            .collect::<Result<Vec<_>>>()?;
        let init: Profile = c.control.init.clone();
        let control = move |g: &Arc<Grid>, tg: TimeGrid| Ok(ControlProcess::constant_in_time(&init.field(g)?, tg));
        check_moment_bounds(&levels, &control, verify_spec(c)?)
    };
    let good = run(cfg)?;
    let bad = run(&loud_config(cfg))?;
    Ok(vec![good, CheckReport::negative_control(bad, "noise amplitude 1e3 at a coarse step")])
}

/// Runs one named check (with its negative controls).
pub fn run_check(cfg: &RunConfig, name: &str) -> Result<Vec<CheckReport>> {
    match name {
        "mass_conservation" => mass(cfg),
        "constant_state" => constant_state(cfg),
        "energy_dissipation" => energy(cfg),
        "gateaux" => gateaux(cfg, false),
        "gateaux_linear" => gateaux(cfg, true),
        "duality" => duality(cfg),
        "backend_consistency" => backend_consistency(cfg),
        "gradient_exactness" => gradient(cfg),
        "optimizer" => optimizer(cfg),
        "truncation" => truncation(cfg),
        "lipschitz" => lipschitz(cfg),
        "moment_bounds" => moments(cfg),
        other => Err(Error::Config(format!(
            "unknown check {other:?}; known: {}",
            CHECK_NAMES.join(", ")
        ))),
    }
}

/// Runs the named checks in parallel (all of them when `names` is empty).
/// A check that cannot be set up yields a failed report.
pub fn run_suite(cfg: &RunConfig, names: &[String]) -> Result<SuiteReport> {
    let selected: Vec<&str> = if names.is_empty() {
        CHECK_NAMES.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    if let Some(bad) = selected.iter().find(|n| !CHECK_NAMES.contains(n)) {
        return Err(Error::Config(format!(
            "unknown check {bad:?}; known: {}",
            CHECK_NAMES.join(", ")
        )));
    }
    let checks: Vec<CheckReport> = selected
        .par_iter()
        .map(|name| run_check(cfg, name).unwrap_or_else(|e| vec![CheckReport::new(name).errored(&e)]))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(SuiteReport::new(cfg.digest()?, checks))
}
