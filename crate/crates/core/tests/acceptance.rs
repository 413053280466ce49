//! Desk-scale acceptance run: one PASS/FAIL line per criterion on the
//! default scenario (1D, 64 cells, 200 steps). A criterion passes when its
//! check and the check's negative control both pass within the time budget.

use std::io::Write;
use std::time::{Duration, Instant};

use choc::cli::{run_with, Environment, EXIT_OK};
use choc::io::RunConfig;
use choc::verify::{run_check, CheckReport};

const BUDGET: Duration = Duration::from_secs(60);
const BACKEND_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    passed: bool,
    detail: String,
}

/// Written to the process stdout directly so the lines survive output capture.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn checks(cfg: &RunConfig, names: &[&str], keys: &[&str]) -> Outcome {
    let mut passed = true;
    let mut detail = Vec::new();
    for name in names {
        let reports: Vec<CheckReport> = match run_check(cfg, name) {
            Ok(r) => r,
            Err(e) => {
                return Outcome {
                    passed: false,
                    detail: format!("{name}: {e}"),
                }
            }
        };
        for r in &reports {
            passed &= r.passed;
            let values: Vec<String> = keys
                .iter()
                .filter(|k| r.measured.contains_key(**k))
                .map(|k| format!("{k}={:.3e}", r.get(k)))
                .collect();
            let mark = if r.passed { "ok" } else { "FAILED" };
            detail.push(format!("{} {mark} {}", r.name, values.join(" ")));
        }
    }
    Outcome {
        passed,
        detail: detail.join("; "),
    }
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let dir = tmp.path().join(name);
        let code = run_with(
            ["choc", "verify", "-o", dir.to_str().unwrap(), "--threads", threads],
            &Environment::default(),
        );
        let report = std::fs::read(dir.join("report.json")).unwrap_or_default();
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap_or_default()).unwrap_or_default();
        (code, report, manifest["digest"].clone())
    };
    let (code_a, report_a, digest_a) = run("a", "4");
    let (code_b, report_b, digest_b) = run("b", "1");
    let identical = !report_a.is_empty() && report_a == report_b;
    Outcome {
        passed: code_a == EXIT_OK && code_b == EXIT_OK && identical && digest_a == digest_b && !digest_a.is_null(),
        detail: format!(
            "exit codes {code_a}/{code_b}, report.json identical: {identical} ({} bytes), manifest digests equal: {}",
            report_a.len(),
            digest_a == digest_b
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let cfg = RunConfig::default();
    type Criterion<'a> = (&'a str, Duration, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("1 mass conservation", BUDGET, Box::new(|| checks(&cfg, &["mass_conservation"], &["max_mass_drift"]))),
        ("2 constant-state fixed point", BUDGET, Box::new(|| checks(&cfg, &["constant_state"], &["max_deviation"]))),
        (
            "3 deterministic energy dissipation",
            BUDGET,
            Box::new(|| checks(&cfg, &["energy_dissipation"], &["max_energy_increase"])),
        ),
        (
            "4 gateaux differentiability",
            BUDGET,
            Box::new(|| checks(&cfg, &["gateaux", "gateaux_linear"], &["order", "max_error"])),
        ),
        ("5 discrete duality", BUDGET, Box::new(|| checks(&cfg, &["duality"], &["max_relative_residual"]))),
        (
            "6 backend consistency",
            BACKEND_BUDGET,
            Box::new(|| checks(&cfg, &["backend_consistency"], &["order", "finest_difference"])),
        ),
        (
            "7 gradient exactness",
            BUDGET,
            Box::new(|| checks(&cfg, &["gradient_exactness"], &["max_relative_error"])),
        ),
        (
            "8 optimizer on synthetic target",
            BUDGET,
            Box::new(|| checks(&cfg, &["optimizer"], &["cost_reduction", "relative_residual", "monotone"])),
        ),
        (
            "9 truncation convergence",
            BUDGET,
            Box::new(|| checks(&cfg, &["truncation"], &["exact_beyond_curvature", "monotone", "max_curvature"])),
        ),
        (
            "10 lipschitz probe",
            BUDGET,
            Box::new(|| checks(&cfg, &["lipschitz"], &["max_ratio_coarse", "max_ratio_fine", "refinement_factor"])),
        ),
        ("11 reproducibility", BUDGET, Box::new(reproducibility)),
    ];

    let mut failed = Vec::new();
    for (name, budget, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let passed = outcome.passed && elapsed <= *budget;
        emit(&format!(
            "{} criterion {name} [{:.1}s] {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        ));
        if !passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
