use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial free-energy density `Ψ(r) = Σ_k a_k r^k` together with the
/// structural constants `c1` (lower curvature bound) and `c2` (growth bound).
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    coefficients: Vec<f64>,
    c1: f64,
    c2: f64,
}

/// Which derivative of `Ψ` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

/// Clamp level `n` applied to `Ψ''` in the linearised and adjoint systems.
/// `+∞` disables the clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruncationLevel(f64);

impl TruncationLevel {
    pub const NONE: TruncationLevel = TruncationLevel(f64::INFINITY);

    pub fn new(n: f64) -> Result<Self> {
        if !(n > 0.0) {
            return Err(Error::Domain(format!(
                "truncation level must be positive, got {n}"
            )));
        }
        Ok(Self(n))
    }

    pub fn level(self) -> f64 {
        self.0
    }

    pub fn is_active(self) -> bool {
        self.0.is_finite()
    }

    /// `T_n(r) = clamp(r, -n, n)`.
    pub fn apply(self, r: f64) -> f64 {
        r.clamp(-self.0, self.0)
    }
}

impl Default for TruncationLevel {
    fn default() -> Self {
        Self::NONE
    }
}

impl Potential {
    /// `Ψ(r) = ¼(r² − 1)²` with `c1 = 1`, `c2 = 3`.
    pub fn double_well() -> Self {
        Self {
            coefficients: vec![0.25, 0.0, -0.5, 0.0, 0.25],
            c1: 1.0,
            c2: 3.0,
        }
    }

    /// Convex quadratic `Ψ(r) = (κ/2) r²`, so `Ψ'' ≡ κ`.
    pub fn quadratic(curvature: f64) -> Result<Self> {
        if !(curvature >= 0.0 && curvature.is_finite()) {
            return Err(Error::Domain(format!(
                "quadratic potential needs a nonnegative curvature, got {curvature}"
            )));
        }
        let c2 = curvature.max((curvature / 2.0).sqrt()).max(1e-12);
        Ok(Self {
            coefficients: vec![0.0, 0.0, curvature / 2.0],
            c1: 0.0,
            c2,
        })
    }

    /// `Ψ ≡ 0`.
    pub fn zero() -> Self {
        Self {
            coefficients: vec![0.0],
            c1: 0.0,
            c2: 1.0,
        }
    }

    /// Arbitrary polynomial with declared constants. The constants are not
    /// checked here; see [`Potential::validate_assumptions`].
    pub fn polynomial(coefficients: Vec<f64>, c1: f64, c2: f64) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain(
                "polynomial coefficients must be a nonempty list of finite numbers".into(),
            ));
        }
        if !(c1 >= 0.0) || !(c2 > 0.0) {
            return Err(Error::Domain(format!(
                "need c1 >= 0 and c2 > 0, got c1 = {c1}, c2 = {c2}"
            )));
        }
        Ok(Self {
            coefficients,
            c1,
            c2,
        })
    }

    /// Same polynomial, different declared constants.
    pub fn with_constants(mut self, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0) || !(c2 > 0.0) {
            return Err(Error::Domain(format!(
                "need c1 >= 0 and c2 > 0, got c1 = {c1}, c2 = {c2}"
            )));
        }
        self.c1 = c1;
        self.c2 = c2;
        Ok(self)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn degree(&self) -> usize {
        self.coefficients
            .iter()
            .rposition(|&a| a != 0.0)
            .unwrap_or(0)
    }

    pub fn psi(&self, r: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * r + a)
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * r + k as f64 * a)
    }

    pub fn psi_second(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * r + (k * (k - 1)) as f64 * a)
    }

    pub fn eval(&self, r: f64, order: Order) -> f64 {
        match order {
            Order::Value => self.psi(r),
            Order::First => self.psi_prime(r),
            Order::Second => self.psi_second(r),
        }
    }

    /// `Ψ''_n(r) = T_n(Ψ''(r))`.
    pub fn psi_second_truncated(&self, r: f64, n: TruncationLevel) -> f64 {
        n.apply(self.psi_second(r))
    }

    /// Samples the structural inequalities on `nsamples` equispaced points of
    /// `range` and reports the worst margin of each. Any negative margin is
    /// returned as an [`Error::Assumption`] naming the worst violation.
    pub fn validate_assumptions(&self, range: (f64, f64), nsamples: usize) -> Result<AssumptionReport> {
        if nsamples < 2 {
            return Err(Error::Domain(format!("need at least 2 samples, got {nsamples}")));
        }
        if !(range.0 < range.1) {
            return Err(Error::Domain(format!(
                "sample range must be increasing, got [{}, {}]",
                range.0, range.1
            )));
        }
        let mut worst = [
            Margin::new(Inequality::NonNegative),
            Margin::new(Inequality::LowerCurvature),
            Margin::new(Inequality::CurvatureGrowth),
            Margin::new(Inequality::SlopeGrowth),
        ];
        let step = (range.1 - range.0) / (nsamples - 1) as f64;
        for i in 0..nsamples {
            let r = range.0 + step * i as f64;
            let (p, dp, ddp) = (self.psi(r), self.psi_prime(r), self.psi_second(r));
            let margins = [
                p,
                ddp + self.c1,
                self.c2 * (1.0 + r * r) - ddp.abs(),
                self.c2 * (1.0 + p) - dp.abs(),
            ];
            for (w, m) in worst.iter_mut().zip(margins) {
                if m < w.margin {
                    w.margin = m;
                    w.witness = r;
                }
            }
        }
        let mut warnings = Vec::new();
        if self.degree() > 4 {
            warnings.push(format!(
                "potential has degree {} (super-quartic growth); stability constants are unvalidated",
                self.degree()
            ));
        }
        let report = AssumptionReport {
            range,
            nsamples,
            margins: worst.to_vec(),
            warnings,
        };
        if let Some(v) = report.worst_violation() {
            return Err(Error::Assumption(v));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `Ψ ≥ 0`
    NonNegative,
    /// `Ψ'' ≥ −c1`
    LowerCurvature,
    /// `|Ψ''| ≤ c2 (1 + r²)`
    CurvatureGrowth,
    /// `|Ψ'| ≤ c2 (1 + Ψ)`
    SlopeGrowth,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Inequality::NonNegative => "Psi(r) >= 0",
            Inequality::LowerCurvature => "Psi''(r) >= -c1",
            Inequality::CurvatureGrowth => "|Psi''(r)| <= c2 (1 + r^2)",
            Inequality::SlopeGrowth => "|Psi'(r)| <= c2 (1 + Psi(r))",
        })
    }
}

/// Smallest sampled slack of one inequality and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    pub inequality: Inequality,
    pub margin: f64,
    pub witness: f64,
}

impl Margin {
    fn new(inequality: Inequality) -> Self {
        Self {
            inequality,
            margin: f64::INFINITY,
            witness: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub range: (f64, f64),
    pub nsamples: usize,
    pub margins: Vec<Margin>,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn worst_violation(&self) -> Option<AssumptionViolation> {
        self.margins
            .iter()
            .filter(|m| m.margin < 0.0)
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
            .map(|m| AssumptionViolation {
                inequality: m.inequality,
                witness: m.witness,
                margin: m.margin,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionViolation {
    pub inequality: Inequality,
    pub witness: f64,
    pub margin: f64,
}

impl fmt::Display for AssumptionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "potential violates {} at r = {} (margin {:e})",
            self.inequality, self.witness, self.margin
        )
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn double_well_values() {
        let p = Potential::double_well();
        assert_eq!((p.psi(0.0), p.psi_prime(0.0), p.psi_second(0.0)), (0.25, 0.0, -1.0));
        for r in [-1.0, 1.0] {
            assert_eq!((p.psi(r), p.psi_prime(r), p.psi_second(r)), (0.0, 0.0, 2.0));
        }
        assert_eq!(p.eval(2.0, Order::First), 6.0);
        assert_eq!(p.eval(2.0, Order::Second), 11.0);
    }

    #[test]
    fn finite_differences_match_derivatives() {
        let pots = [
            Potential::double_well(),
            Potential::quadratic(2.5).unwrap(),
            Potential::polynomial(vec![1.0, -0.3, 0.7, 0.2, 0.1, 0.0, 0.05], 1.0, 1.0).unwrap(),
        ];
        for p in &pots {
            for &r in &[-1.7, -0.2, 0.0, 0.4, 1.3] {
                let mut prev = f64::INFINITY;
                for &eps in &[1e-2, 5e-3, 2.5e-3] {
                    let fd1 = (p.psi(r + eps) - p.psi(r - eps)) / (2.0 * eps);
                    let fd2 = (p.psi_prime(r + eps) - p.psi_prime(r - eps)) / (2.0 * eps);
                    let err = (fd1 - p.psi_prime(r)).abs() + (fd2 - p.psi_second(r)).abs();
                    assert!(err < 50.0 * eps * eps);
                    assert!(err <= prev || err < 1e-10);
                    prev = err;
                }
            }
        }
    }

    #[test]
    fn truncated_second_derivative() {
        let p = Potential::double_well();
        assert_eq!(p.psi_second_truncated(3.0, TruncationLevel::new(2.0).unwrap()), 2.0);
        assert_eq!(p.psi_second_truncated(0.0, TruncationLevel::new(5.0).unwrap()), -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let r = rng.random_range(-50.0..50.0);
            assert_eq!(p.psi_second_truncated(r, TruncationLevel::NONE), p.psi_second(r));
        }
        assert!(TruncationLevel::new(0.0).is_err());
        assert!(TruncationLevel::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn truncation_is_lipschitz_bounded_and_eventually_constant(
            a in -1e3f64..1e3, b in -1e3f64..1e3, n in 0.01f64..100.0, r in -5.0f64..5.0,
        ) {
            let t = TruncationLevel::new(n).unwrap();
            prop_assert!((t.apply(a) - t.apply(b)).abs() <= (a - b).abs());
            prop_assert!(t.apply(a).abs() <= n);
            let p = Potential::double_well();
            let v = p.psi_second_truncated(r, t);
            prop_assert!(v >= -(p.c1().min(n)));
            let exact = p.psi_second(r);
            if exact.abs() <= n {
                prop_assert_eq!(v, exact);
                prop_assert_eq!(p.psi_second_truncated(r, TruncationLevel::new(2.0 * n).unwrap()), exact);
            }
        }
    }

    #[test]
    fn default_well_satisfies_assumptions() {
        let report = Potential::double_well()
            .validate_assumptions((-10.0, 10.0), 20_001)
            .unwrap();
        assert!(report.margins.iter().all(|m| m.margin >= 0.0));
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn weak_lower_bound_fails_at_origin() {
        let p = Potential::double_well().with_constants(0.5, 3.0).unwrap();
        match p.validate_assumptions((-10.0, 10.0), 2001) {
            Err(Error::Assumption(v)) => {
                assert_eq!(v.inequality, Inequality::LowerCurvature);
                assert!(v.witness.abs() < 1e-12);
                assert!((v.margin + 0.5).abs() < 1e-12);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn sextic_fails_growth_bound() {
        let p = Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 0.0, 1.0).unwrap();
        match p.validate_assumptions((-10.0, 10.0), 2001) {
            Err(Error::Assumption(v)) => assert_eq!(v.inequality, Inequality::CurvatureGrowth),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn super_quartic_warns() {
        // r^6 / 1e6 stays within generous constants on a small range
        let p = Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1e-6], 1.0, 10.0).unwrap();
        let report = p.validate_assumptions((-1.0, 1.0), 101).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn validate_rejects_bad_sampling() {
        let p = Potential::double_well();
        assert!(p.validate_assumptions((-1.0, 1.0), 1).is_err());
        assert!(p.validate_assumptions((1.0, -1.0), 10).is_err());
    }
}
