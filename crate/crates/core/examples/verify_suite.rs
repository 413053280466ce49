//! Runs the verification suite on the default scenario, or on the config
//! file given as the first argument, and prints one line per check.
//!
//! cargo run --release --example verify_suite [config.toml] [check...]

use choc::io::{parse_config, RunConfig};
use choc::verify::run_suite;

fn main() -> choc::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) if path.ends_with(".toml") => parse_config(&std::fs::read_to_string(path)?)?,
        Some(name) => {
            let mut cfg = RunConfig::default();
            cfg.verify.checks = vec![name];
            cfg
        }
        None => RunConfig::default(),
    };
    let mut names = cfg.verify.checks.clone();
    names.extend(args);
    let start = std::time::Instant::now();
    let report = run_suite(&cfg, &names)?;
    print!("{report}");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
