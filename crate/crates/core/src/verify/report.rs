use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub parameter: f64,
    pub error: f64,
    /// Local order `log(e_k/e_{k−1}) / log(p_k/p_{k−1})`; absent on the first row
    /// or when an error is zero.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub parameter: String,
    pub rows: Vec<TableRow>,
    /// Least-squares slope of `log e` against `log parameter`.
    pub fitted_order: Option<f64>,
}

impl ConvergenceTable {
    pub fn new(parameter: &str, params: &[f64], errors: &[f64]) -> Self {
        let rows = params
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(k, (&p, &e))| TableRow {
                parameter: p,
                error: e,
                order: (k > 0)
                    .then(|| (e / errors[k - 1]).ln() / (p / params[k - 1]).ln())
                    .filter(|o| o.is_finite()),
            })
            .collect();
        Self {
            parameter: parameter.into(),
            rows,
            fitted_order: fitted_order(params, errors),
        }
    }
}

/// Least-squares slope of `log e` against `log p`; `None` if fewer than two
/// points or any value is not positive and finite.
pub fn fitted_order(params: &[f64], errors: &[f64]) -> Option<f64> {
    if params.len() < 2 || params.len() != errors.len() {
        return None;
    }
    let ok = |v: &f64| *v > 0.0 && v.is_finite();
    if !params.iter().all(ok) || !errors.iter().all(ok) {
        return None;
    }
    let xs: Vec<f64> = params.iter().map(|p| p.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Outcome of one verification check.
///
/// `passed` is computed from `measured` and `tolerance` only. Non-finite
/// measurements serialise as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: BTreeMap<String, Value>,
    /// Hex SHA-256 of the JSON-encoded `inputs`.
    pub inputs_digest: String,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: BTreeMap<String, f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<ConvergenceTable>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            inputs: BTreeMap::new(),
            inputs_digest: String::new(),
            measured: BTreeMap::new(),
            tolerance: BTreeMap::new(),
            passed: false,
            table: None,
            notes: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        self.inputs_digest = sha256_hex(serde_json::to_string(&self.inputs).unwrap_or_default().as_bytes());
        self
    }

    pub fn measure(&mut self, key: &str, value: f64) {
        self.measured.insert(key.into(), value);
    }

    pub fn tolerate(&mut self, key: &str, value: f64) {
        self.tolerance.insert(key.into(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Measured value, or NaN when absent.
    pub fn get(&self, key: &str) -> f64 {
        self.measured.get(key).copied().unwrap_or(f64::NAN)
    }

    /// Report for a check that could not run.
    pub fn errored(mut self, err: &crate::Error) -> Self {
        self.passed = false;
        self.measure("blow_up", if err.is_blow_up() { 1.0 } else { 0.0 });
        self.note(format!("check aborted: {err}"));
        self
    }

    /// Wraps a check that is expected to fail; passes iff the inner check failed.
    pub fn negative_control(inner: CheckReport, description: &str) -> Self {
        let mut r = CheckReport {
            name: format!("{}.negative_control", inner.name),
            passed: !inner.passed,
            ..inner
        };
        r.notes.insert(0, format!("negative control ({description}): expected to fail the underlying check"));
        r
    }

    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut parts: Vec<String> = self
            .measured
            .iter()
            .filter(|(k, _)| !k.contains('@'))
            .map(|(k, v)| format!("{k}={v:.3e}"))
            .collect();
        if let Some(o) = self.table.as_ref().and_then(|t| t.fitted_order).filter(|_| !self.measured.contains_key("order")) {
            parts.push(format!("order={o:.3}"));
        }
        format!("{status} {:<36} {}", self.name, parts.join(" "))
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary_line())?;
        if let Some(t) = &self.table {
            writeln!(f, "    {:>12} {:>12} {:>8}", t.parameter, "error", "order")?;
            for r in &t.rows {
                let o = r.order.map(|o| format!("{o:8.3}")).unwrap_or_else(|| "       -".into());
                writeln!(f, "    {:>12.4e} {:>12.4e} {o}", r.parameter, r.error)?;
            }
        }
        for n in &self.notes {
            writeln!(f, "    note: {n}")?;
        }
        Ok(())
    }
}

/// All reports of one `verify` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tool_version: String,
    pub config_digest: String,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn new(config_digest: String, checks: Vec<CheckReport>) -> Self {
        Self {
            tool_version: crate::io::TOOL_VERSION.into(),
            config_digest,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> crate::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{c}")?;
        }
        let failed = self.failed();
        if failed.is_empty() {
            writeln!(f, "all {} checks passed", self.checks.len())
        } else {
            writeln!(f, "{} of {} checks failed: {}", failed.len(), self.checks.len(), failed.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_order_of_power_laws() {
        let p = [1e-1, 1e-2, 1e-3];
        let e: Vec<f64> = p.iter().map(|x: &f64| 3.0 * x * x).collect();
        assert!((fitted_order(&p, &e).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fitted_order(&p, &[1.0, 0.0, 1.0]), None);
        assert_eq!(fitted_order(&p[..1], &e[..1]), None);
        let t = ConvergenceTable::new("eps", &p, &e);
        assert_eq!(t.rows[0].order, None);
        assert!((t.rows[2].order.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn digest_tracks_inputs() {
        let a = CheckReport::new("x").input("seed", 1u64).input("npoints", 64);
        let b = CheckReport::new("x").input("npoints", 64).input("seed", 1u64);
        let c = CheckReport::new("x").input("seed", 2u64).input("npoints", 64);
        assert_eq!(a.inputs_digest, b.inputs_digest);
        assert_ne!(a.inputs_digest, c.inputs_digest);
    }

    #[test]
    fn negative_control_inverts() {
        let mut r = CheckReport::new("mass");
        r.passed = false;
        let n = CheckReport::negative_control(r, "mean mode");
        assert!(n.passed);
        assert_eq!(n.name, "mass.negative_control");
    }

    #[test]
    fn non_finite_measurements_serialise() {
        let mut r = CheckReport::new("m");
        r.measure("x", f64::INFINITY);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"x\":null"));
    }
}
