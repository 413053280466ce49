use super::{Field, SpectralField};
use crate::error::{Error, Result};

/// Mean value below which a field counts as zero-mean for the inverse Laplacian.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

/// Discrete Neumann Laplacian `Δx`.
pub fn laplacian(x: &Field) -> Field {
    let values = x
        .grid()
        .laplacian_values(x.values())
        .expect("field length matches its grid");
    Field::from_raw(x.grid(), values)
}

/// Volume-weighted grid mean `x_D`.
pub fn mean(x: &Field) -> f64 {
    x.values().iter().sum::<f64>() / x.len() as f64
}

/// Discrete `H = L²(D)` inner product with midpoint weights.
pub fn inner_h(x: &Field, z: &Field) -> f64 {
    debug_assert!(x.same_grid(z));
    x.grid().cell_volume()
        * x.values()
            .iter()
            .zip(z.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

pub fn norm_h(x: &Field) -> f64 {
    inner_h(x, x).sqrt()
}

/// `‖∇x‖²_H` from face differences; equals `⟨-Δx, x⟩_H` exactly in exact arithmetic.
pub fn gradient_norm_sq(x: &Field) -> f64 {
    let grid = x.grid();
    let v = x.values();
    let mut acc = 0.0;
    match grid.dims() {
        [n] => {
            let h = grid.spacing()[0];
            for i in 0..n - 1 {
                let d = (v[i + 1] - v[i]) / h;
                acc += d * d;
            }
        }
        [n0, n1] => {
            let (h0, h1) = (grid.spacing()[0], grid.spacing()[1]);
            for i in 0..*n0 {
                for j in 0..*n1 {
                    let c = v[i * n1 + j];
                    if i + 1 < *n0 {
                        let d = (v[(i + 1) * n1 + j] - c) / h0;
                        acc += d * d;
                    }
                    if j + 1 < *n1 {
                        let d = (v[i * n1 + j + 1] - c) / h1;
                        acc += d * d;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    acc * grid.cell_volume()
}

/// `‖x‖_V = (‖x‖²_H + ‖∇x‖²_H)^{1/2}`.
pub fn norm_v(x: &Field) -> f64 {
    (inner_h(x, x) + gradient_norm_sq(x)).sqrt()
}

/// `‖x‖_Z = (‖x‖²_V + ‖Δx‖²_H)^{1/2}`.
pub fn norm_z(x: &Field) -> f64 {
    let lap = laplacian(x);
    (inner_h(x, x) + gradient_norm_sq(x) + inner_h(&lap, &lap)).sqrt()
}

/// Inverse of `-Δ` on zero-mean fields (the operator `𝒩`).
///
/// Fails if `|mean(x)| > 1e-10`; the error carries the offending mean.
pub fn inverse_neumann_laplacian(x: &Field) -> Result<Field> {
    let m = mean(x);
    if m.abs() > ZERO_MEAN_TOL {
        return Err(Error::Precondition {
            what: "inverse Neumann Laplacian needs a zero-mean field",
            value: m,
        });
    }
    let mut spec = SpectralField::from_field(x);
    let eig = x.grid().eigenvalues().to_vec();
    let coeffs = spec.coefficients_mut();
    coeffs[0] = 0.0;
    for (c, l) in coeffs.iter_mut().zip(&eig).skip(1) {
        *c /= -l;
    }
    Ok(spec.to_field())
}

/// Dual norm `‖x‖_* = ‖∇𝒩(x - x_D)‖_H + |x_D|`.
pub fn norm_vstar(x: &Field) -> f64 {
    let m = mean(x);
    let mut centred = x.clone();
    centred.shift(-m);
    let n = inverse_neumann_laplacian(&centred).expect("centred field has zero mean");
    gradient_norm_sq(&n).sqrt() + m.abs()
}

/// Both sides of `‖x‖²_H ≤ σ‖∇x‖²_H + C_σ‖x‖²_*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactnessCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Smallest constant valid for every zero-mean grid field.
    pub c_sigma: f64,
}

/// Evaluates the interpolation inequality between `H`, `V` and `V*` on a
/// zero-mean field, with `C_σ = max_μ μ(1 - σμ)` over the positive spectrum
/// `μ` of `-Δ`, clipped at zero.
pub fn check_compactness_inequality(x: &Field, sigma: f64) -> Result<CompactnessCheck> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let m = mean(x);
    if m.abs() > ZERO_MEAN_TOL {
        return Err(Error::Precondition {
            what: "compactness inequality is stated for zero-mean fields",
            value: m,
        });
    }
    let c_sigma = x
        .grid()
        .eigenvalues()
        .iter()
        .skip(1)
        .map(|&l| {
            let mu = -l;
            mu * (1.0 - sigma * mu)
        })
        .fold(0.0_f64, f64::max);
    let vstar = norm_vstar(x);
    let lhs = inner_h(x, x);
    let rhs = sigma * gradient_norm_sq(x) + c_sigma * vstar * vstar;
    if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::Domain(format!(
            "compactness inequality violated: lhs {lhs:e} > rhs {rhs:e}"
        )));
    }
    Ok(CompactnessCheck { lhs, rhs, c_sigma })
}
