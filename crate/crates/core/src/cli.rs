//! The `choc` command line: `simulate`, `linearize`, `adjoint`, `optimize`,
//! `verify` and `info`. Every command reads an optional config file, writes
//! its artifacts and a `manifest.json` into the output directory, and maps
//! the outcome to an exit code ([`EXIT_OK`], [`EXIT_CHECK_FAILED`],
//! [`EXIT_USAGE`], [`EXIT_BLOW_UP`]).
//!
//! The output directory is `--out`, else `$CHOC_OUT_DIR`, else `output.dir`.
//! The worker count is `--threads`, else `$CHOC_THREADS`, else one per core.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::control::{mean_and_stderr, ControlProblem, ControlProcess, Ensemble};
use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::io::{
    parse_config, read_snapshot_raw, serialize_config, Manifest, RunConfig, RunTiming, SeedRecord, Series, Snapshot,
};
use crate::physics::TruncationLevel;
use crate::sensitivity::{solve_adjoint, solve_linearized};
use crate::verify::{duality_sides, run_suite, SmoothRandom};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

pub const ENV_OUT_DIR: &str = "CHOC_OUT_DIR";
pub const ENV_THREADS: &str = "CHOC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "choc", version, about = "Stochastic Cahn-Hilliard simulation, sensitivities and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (`key = value` lines under `[section]` headers); defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the state on every path; writes state snapshots and mass/energy series.
    Simulate(Common),
    /// Solve the linearised system for a random smooth direction; writes tangent snapshots.
    Linearize {
        #[command(flatten)]
        common: Common,
        /// Index of the random smooth direction.
        #[arg(long, default_value_t = 0)]
        direction_seed: u64,
    },
    /// Solve the adjoint system; writes `p̃` snapshots and a duality summary.
    Adjoint {
        #[command(flatten)]
        common: Common,
        /// Index of the random smooth direction used for the duality summary.
        #[arg(long, default_value_t = 0)]
        direction_seed: u64,
    },
    /// Projected gradient descent from `control.init`; writes control snapshots and the cost history.
    Optimize(Common),
    /// Run verification checks (all, or those named).
    Verify {
        #[command(flatten)]
        common: Common,
        checks: Vec<String>,
    },
    /// Print the resolved config, or convert a snapshot to CSV on stdout.
    Info {
        #[command(flatten)]
        common: Common,
        /// Snapshot file to print as CSV.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

/// Values taken from the process environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Environment {
    pub out_dir: Option<PathBuf>,
    pub threads: Option<String>,
}

impl Environment {
    pub fn from_process() -> Self {
        Self {
            out_dir: std::env::var_os(ENV_OUT_DIR).map(PathBuf::from),
            threads: std::env::var(ENV_THREADS).ok(),
        }
    }
}

/// Entry point of the binary; `args` includes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &Environment::from_process())
}

/// As [`run`] with an explicit environment.
pub fn run_with<I, T>(args: I, env: &Environment) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli, env) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_blow_up() {
        EXIT_BLOW_UP
    } else {
        EXIT_USAGE
    }
}

struct Context {
    cfg: RunConfig,
    /// Directory against which relative paths in the config resolve.
    base_dir: PathBuf,
    out: PathBuf,
    start: SystemTime,
}

impl Context {
    fn load(common: &Common, env: &Environment) -> Result<Self> {
        let (cfg, base_dir) = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let cfg = parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, dir)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        let out = common
            .out
            .clone()
            .or_else(|| env.out_dir.clone())
            .unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Self {
            cfg,
            base_dir,
            out,
            start: SystemTime::now(),
        })
    }

    fn manifest(&self, command: &str, npaths: usize) -> Result<Manifest> {
        let spec = crate::control::EnsembleSpec::new(npaths, self.cfg.ensemble.base_seed)?;
        let seeds = SeedRecord {
            base_seed: spec.base_seed,
            npaths,
            path_seeds: (0..npaths).map(|i| spec.seed(i)).collect(),
        };
        let mut m = Manifest::new(command, self.cfg.digest()?, seeds);
        std::fs::create_dir_all(&self.out)?;
        m.write_output(&self.out, "config.toml", serialize_config(&self.cfg)?.as_bytes())?;
        Ok(m)
    }

    fn finish(&self, mut manifest: Manifest) -> Result<()> {
        manifest.timing = Some(RunTiming::since(self.start));
        manifest.write(&self.out)?;
        println!("wrote {} files and manifest.json to {}", manifest.outputs.len(), self.out.display());
        Ok(())
    }
}

fn thread_count(flag: Option<usize>, env: &Environment) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match &env.threads {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{ENV_THREADS} must be a thread count, got {s:?}"))),
    }
}

fn execute(cli: Cli, env: &Environment) -> Result<i32> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Optimize(c) => c,
        Command::Linearize { common, .. }
        | Command::Adjoint { common, .. }
        | Command::Verify { common, .. }
        | Command::Info { common, .. } => common,
    };
    let threads = thread_count(common.threads, env)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", threads.unwrap_or(0))))?;
    if let Command::Info { snapshot: Some(path), .. } = &cli.command {
        print!("{}", read_snapshot_raw(path)?.to_csv(None));
        return Ok(EXIT_OK);
    }
    let ctx = Context::load(common, env)?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => simulate(&ctx),
        Command::Linearize { direction_seed, .. } => sensitivity(&ctx, *direction_seed, Sensitivity::Linearized),
        Command::Adjoint { direction_seed, .. } => sensitivity(&ctx, *direction_seed, Sensitivity::Adjoint),
        Command::Optimize(_) => optimize(&ctx),
        Command::Verify { checks, .. } => verify(&ctx, checks),
        Command::Info { .. } => info(&ctx),
    })
}

fn snapshot_bytes(f: &Field) -> Vec<u8> {
    Snapshot::from_field(f).to_bytes()
}

/// Node indices written for a series of `len` nodes.
fn written_nodes(stride: usize, len: usize) -> Vec<usize> {
    let last = len - 1;
    let mut nodes: Vec<usize> = if stride == 0 { vec![last] } else { (0..len).step_by(stride).collect() };
    if nodes.last() != Some(&last) {
        nodes.push(last);
    }
    nodes
}

fn simulate(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let tg = *solver.time();
    let y0 = cfg.initial_state(&grid)?;
    let u = cfg.initial_control(&grid)?;
    let ens = Ensemble::new(cfg.ensemble_spec()?, solver.noise().nmodes(), &tg);
    let trajs = ens.map_paths(|_, wp| solver.solve(&y0, &u, wp))?;

    let mut m = ctx.manifest("simulate", ens.len())?;
    for (i, traj) in trajs.iter().enumerate() {
        for n in written_nodes(cfg.output.snapshot_stride, traj.nsteps() + 1) {
            m.write_output(&ctx.out, &format!("state_p{i:04}_n{n:06}.choc"), &snapshot_bytes(traj.state(n)))?;
        }
    }
    let mut series = Series::new(&["step", "time", "mass_mean", "mass_drift_max", "energy_mean", "energy_stderr"]);
    for n in 0..=tg.nsteps() {
        let masses: Vec<f64> = trajs.iter().map(|t| t.mass()[n]).collect();
        let drift = trajs.iter().map(|t| (t.mass()[n] - t.mass()[0]).abs()).fold(0.0, f64::max);
        let energies: Vec<f64> = trajs.iter().map(|t| t.energy()[n]).collect();
        let (e_mean, e_err) = mean_and_stderr(&energies);
        series.push(vec![n as f64, tg.time(n), mean_and_stderr(&masses).0, drift, e_mean, e_err]);
    }
    m.write_output(&ctx.out, "series.csv", series.to_csv().as_bytes())?;
    let mut paths = Series::new(&["path", "mass_drift", "final_energy", "max_abs"]);
    for (i, t) in trajs.iter().enumerate() {
        paths.push(vec![i as f64, t.mass_drift(), *t.energy().last().unwrap_or(&f64::NAN), t.max_abs()]);
    }
    m.write_output(&ctx.out, "paths.csv", paths.to_csv().as_bytes())?;

    let max_drift = trajs.iter().map(|t| t.mass_drift()).fold(0.0, f64::max);
    let final_energy: Vec<f64> = trajs.iter().map(|t| *t.energy().last().unwrap_or(&f64::NAN)).collect();
    m.summary = json!({
        "max_mass_drift": max_drift,
        "max_abs": trajs.iter().map(|t| t.max_abs()).fold(0.0, f64::max),
        "final_energy_mean": mean_and_stderr(&final_energy).0,
    });
    println!("simulate: {} paths, {} steps, max mass drift {max_drift:.3e}", ens.len(), tg.nsteps());
    ctx.finish(m)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sensitivity {
    Linearized,
    Adjoint,
}

/// The random smooth direction selected by `--direction-seed`.
pub fn direction(cfg: &RunConfig, index: u64) -> Result<ControlProcess> {
    let grid = cfg.build_grid()?;
    Ok(SmoothRandom::keyed(cfg.ensemble.base_seed, index, cfg.grid.ndims, 4, 3, 1.0).control(&grid, cfg.time_grid()?))
}

fn sensitivity(ctx: &Context, direction_seed: u64, which: Sensitivity) -> Result<i32> {
    let cfg = &ctx.cfg;
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let tg = *solver.time();
    let y0 = cfg.initial_state(&grid)?;
    let u = cfg.initial_control(&grid)?;
    let ens = Ensemble::new(cfg.ensemble_spec()?, solver.noise().nmodes(), &tg);
    let targets = cfg.targets(&solver, &ens, &ctx.base_dir)?;
    let weights = cfg.weights()?;
    let trunc = cfg.truncation()?;
    let backend = cfg.solver.backend;
    let h = direction(cfg, direction_seed)?;

    struct PathOut {
        fields: Vec<Field>,
        lhs: f64,
        rhs: f64,
    }
    let outs = ens.map_paths(|i, wp| {
        let traj = solver.solve(&y0, &u, wp)?;
        let adj = solve_adjoint(&solver, &traj, targets.for_path(i), &weights, backend, trunc)?;
        let (lhs, rhs) = duality_sides(&solver, &traj, targets.for_path(i), &weights, &adj.p_tilde, &h)?;
        let fields = match which {
            Sensitivity::Linearized => solve_linearized(&solver, &traj, &h, trunc)?.states,
            Sensitivity::Adjoint => adj.p_tilde,
        };
        Ok(PathOut { fields, lhs, rhs })
    })?;

    let (command, prefix) = match which {
        Sensitivity::Linearized => ("linearize", "z"),
        Sensitivity::Adjoint => ("adjoint", "ptilde"),
    };
    let mut m = ctx.manifest(command, ens.len())?;
    let mut series = Series::new(&["step", "time", "norm_mean", "norm_stderr"]);
    for n in 0..=tg.nsteps() {
        let norms: Vec<f64> = outs.iter().map(|o| grid::norm_h(&o.fields[n])).collect();
        let (mean, err) = mean_and_stderr(&norms);
        series.push(vec![n as f64, tg.time(n), mean, err]);
    }
    m.write_output(&ctx.out, &format!("{prefix}_norms.csv"), series.to_csv().as_bytes())?;
    let nodes = match (which, cfg.output.snapshot_stride) {
        (Sensitivity::Adjoint, 0) => vec![0],
        (_, stride) => written_nodes(stride, tg.nsteps() + 1),
    };
    for (i, o) in outs.iter().enumerate() {
        for &n in &nodes {
            m.write_output(&ctx.out, &format!("{prefix}_p{i:04}_n{n:06}.choc"), &snapshot_bytes(&o.fields[n]))?;
        }
    }
    let mut duality = Series::new(&["path", "adjoint_side", "tangent_side", "relative_residual"]);
    let mut worst: f64 = 0.0;
    for (i, o) in outs.iter().enumerate() {
        let scale = o.lhs.abs().max(o.rhs.abs());
        let rel = if scale == 0.0 { 0.0 } else { (o.lhs - o.rhs).abs() / scale };
        worst = worst.max(rel);
        duality.push(vec![i as f64, o.lhs, o.rhs, rel]);
    }
    m.write_output(&ctx.out, "duality.csv", duality.to_csv().as_bytes())?;
    m.summary = json!({
        "backend": backend,
        "truncation": if trunc == TruncationLevel::NONE { None } else { Some(trunc.level()) },
        "direction_seed": direction_seed,
        "direction_norm": h.norm(),
        "duality_max_relative_residual": worst,
    });
    println!("{command}: {} paths, duality max relative residual {worst:.3e}", ens.len());
    ctx.finish(m)?;
    Ok(EXIT_OK)
}

fn optimize(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let solver = cfg.solver()?;
    let grid = solver.grid().clone();
    let y0 = cfg.initial_state(&grid)?;
    let u0 = cfg.initial_control(&grid)?;
    let ens = Ensemble::new(cfg.ensemble_spec()?, solver.noise().nmodes(), solver.time());
    let targets = cfg.targets(&solver, &ens, &ctx.base_dir)?;
    let problem =
        ControlProblem::new(solver, y0, cfg.weights()?, targets, cfg.control.radius)?.with_truncation(cfg.truncation()?);
    let result = problem.optimize(&u0, &ens, &cfg.optimizer)?;

    let mut m = ctx.manifest("optimize", ens.len())?;
    for n in written_nodes(cfg.output.snapshot_stride, result.control.len()) {
        m.write_output(&ctx.out, &format!("control_n{n:06}.choc"), &snapshot_bytes(result.control.field(n)))?;
    }
    let mut history = Series::new(&["iteration", "cost", "gradient_map", "step"]);
    for (k, cost) in result.cost_history.iter().enumerate() {
        let g = result.gradient_map_history.get(k).copied().unwrap_or(f64::NAN);
        let s = if k == 0 { f64::NAN } else { result.step_history.get(k - 1).copied().unwrap_or(f64::NAN) };
        history.push(vec![k as f64, *cost, g, s]);
    }
    m.write_output(&ctx.out, "cost_history.csv", history.to_csv().as_bytes())?;
    m.summary = serde_json::to_value(&result)?;
    println!(
        "optimize: {:?} after {} iterations, cost {:.6e} -> {:.6e}",
        result.termination,
        result.iterations,
        result.cost_history.first().copied().unwrap_or(f64::NAN),
        result.final_cost
    );
    ctx.finish(m)?;
    Ok(EXIT_OK)
}

fn verify(ctx: &Context, names: &[String]) -> Result<i32> {
    let mut selected = ctx.cfg.verify.checks.clone();
    selected.extend(names.iter().cloned());
    let report = run_suite(&ctx.cfg, &selected)?;
    let mut m = ctx.manifest("verify", ctx.cfg.verify.npaths)?;
    m.write_output(&ctx.out, "report.json", report.to_json()?.as_bytes())?;
    m.summary = json!({ "passed": report.passed, "failed": report.failed() });
    print!("{report}");
    ctx.finish(m)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn info(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let solver = cfg.solver()?;
    let tg = solver.time();
    print!("{}", serialize_config(cfg)?);
    println!();
    println!("# cells {:?}, spacing {:?}", solver.grid().dims(), solver.grid().dims().iter().zip(solver.grid().lengths()).map(|(n, l)| l / *n as f64).collect::<Vec<_>>());
    println!("# tau {:e}, {} steps", tg.tau(), tg.nsteps());
    println!("# potential c1 = {}, c2 = {}", solver.potential().c1(), solver.potential().c2());
    let modes: Vec<Vec<usize>> = if cfg.noise.nmodes == 0 {
        Vec::new()
    } else {
        cfg.noise.modes.as_ref().map_or_else(
            || RunConfig::default_noise_modes(cfg.grid.ndims, cfg.noise.nmodes),
            |m| m.iter().map(|k| k.as_slice().to_vec()).collect(),
        )
    };
    println!("# noise modes {modes:?}, amplitudes {:?}", solver.noise().amplitudes());
    println!("# config digest {}", cfg.digest()?);
    let mut m = ctx.manifest("info", cfg.ensemble.npaths)?;
    m.summary = json!({ "tau": tg.tau(), "noise_modes": modes });
    ctx.finish(m)?;
    Ok(EXIT_OK)
}
