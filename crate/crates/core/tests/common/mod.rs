#![allow(dead_code)]

use std::sync::Arc;

use choc::control::ControlProcess;
use choc::grid::{Field, Grid};
use choc::state::TimeGrid;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_field(grid: &Arc<Grid>, rng: &mut impl Rng, scale: f64) -> Field {
    let v = (0..grid.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Field::from_values(grid, v).unwrap()
}

pub fn random_control(grid: &Arc<Grid>, tg: TimeGrid, rng: &mut impl Rng, scale: f64) -> ControlProcess {
    let fields = (0..tg.nsteps()).map(|_| random_field(grid, rng, scale)).collect();
    ControlProcess::from_fields(tg, fields).unwrap()
}

pub fn vector(x: &Field) -> DVector<f64> {
    DVector::from_column_slice(x.values())
}

pub fn field(grid: &Arc<Grid>, v: &DVector<f64>) -> Field {
    Field::from_values(grid, v.iter().copied().collect()).unwrap()
}

/// Second differences along one axis with reflected ghost cells.
fn second_difference(n: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let left = if i == 0 { i } else { i - 1 };
        let right = if i + 1 == n { i } else { i + 1 };
        m[(i, left)] += 1.0;
        m[(i, right)] += 1.0;
        m[(i, i)] -= 2.0;
    }
    m / (h * h)
}

/// Dense Neumann Laplacian in row-major cell order.
pub fn dense_laplacian(grid: &Grid) -> DMatrix<f64> {
    match grid.dims() {
        [n] => second_difference(*n, grid.spacing()[0]),
        [n0, n1] => {
            let a = second_difference(*n0, grid.spacing()[0]);
            let b = second_difference(*n1, grid.spacing()[1]);
            a.kronecker(&DMatrix::identity(*n1, *n1)) + DMatrix::identity(*n0, *n0).kronecker(&b)
        }
        _ => unreachable!(),
    }
}

/// `I + τΔ² − τSΔ`.
pub fn dense_implicit(grid: &Grid, tau: f64, s: f64) -> DMatrix<f64> {
    let l = dense_laplacian(grid);
    let n = grid.len();
    DMatrix::identity(n, n) + (&l * &l) * tau - l * (tau * s)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
