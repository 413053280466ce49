//! Cosine modes are eigenfields of the cell-centred Neumann Laplacian; the
//! inverse on zero-mean fields undoes it, and the dual norm follows.
//!
//! cargo run --release --example spectral_laplacian

use std::f64::consts::PI;

use choc::grid::{self, Field, Grid};

fn main() -> choc::Result<()> {
    let n = 64;
    let g = Grid::line(n, 1.0)?;
    let h = g.spacing()[0];
    println!("{:>3} {:>16} {:>16} {:>12}", "k", "discrete", "continuum", "residual");
    for k in [1usize, 2, 4, 8, 16, 32] {
        let v = Field::cosine_mode(&g, &[k]);
        let lambda = -(2.0 / (h * h)) * (1.0 - (k as f64 * PI / n as f64).cos());
        let residual = grid::norm_h(&grid::laplacian(&v).sub(&v.scaled(lambda))) / grid::norm_h(&v);
        println!("{k:>3} {lambda:>16.6} {:>16.6} {residual:>12.2e}", -(k as f64 * PI).powi(2));
    }

    let x = Field::from_fn(&g, |p| (3.0 * PI * p[0]).cos() + 0.2 * (7.0 * PI * p[0]).cos());
    let nx = grid::inverse_neumann_laplacian(&x)?;
    let round_trip = grid::norm_h(&grid::laplacian(&nx).add(&x));
    println!("round trip |Δ𝒩x + x|_H = {round_trip:.2e}");
    println!("|x|_H = {:.6}  |x|_V = {:.6}  |x|_V* = {:.6}", grid::norm_h(&x), grid::norm_v(&x), grid::norm_vstar(&x));
    Ok(())
}
