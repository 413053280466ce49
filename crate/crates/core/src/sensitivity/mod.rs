//! Linearised (tangent) and adjoint solvers for the discrete state scheme.
//!
//! The linearised step mirrors the state step:
//!
//! ```text
//! (I + τΔ² − τSΔ) z_{n+1} = z_n + τΔ((Ψ''_n(y_n) − S) z_n − h_n) + DB(y_n)[z_n] ΔW_n,   z_0 = 0,
//! ```
//!
//! so `h ↦ z` is exactly linear. The discrete-transpose adjoint runs the
//! algebraic transpose of that recursion backwards in time, which makes the
//! duality
//!
//! ```text
//! Σ_n τ⟨h_n, p̃_n⟩ = α₁ Σ_n τ⟨y_n − x_{Q,n}, z_n⟩ + α₂⟨y_N − x_T, z_N⟩
//! ```
//!
//! hold to round-off on every path.

mod adjoint;
mod linearized;

pub use adjoint::{solve_adjoint, AdjointBackend, AdjointSolution};
pub use linearized::{
    convergence_in_truncation, solve_linearized, LinearizedSolution, TruncationRow,
    TruncationTable,
};

use crate::grid::{self, Field};

/// `(Σ_{n=1}^{N} τ‖a_n − b_n‖²_H)^{1/2}` over node sequences `a_0..a_N`, `b_0..b_N`.
pub fn l2_time_distance(a: &[Field], b: &[Field], tau: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| {
            let d = x.sub(y);
            tau * grid::inner_h(&d, &d)
        })
        .sum::<f64>()
        .sqrt()
}

/// `(Σ_{n=1}^{N} τ‖a_n‖²_H)^{1/2}`.
pub fn l2_time_norm(a: &[Field], tau: f64) -> f64 {
    a.iter()
        .skip(1)
        .map(|x| tau * grid::inner_h(x, x))
        .sum::<f64>()
        .sqrt()
}
