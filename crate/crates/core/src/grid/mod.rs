//! Uniform cell-centred grids on an axis-aligned box with homogeneous Neumann
//! boundary conditions, scalar fields on them, and the discrete operators and
//! norms built from the Neumann Laplacian.
//!
//! The Laplacian is the second-order central difference with reflected ghost
//! points. On a cell-centred grid the reflection `x[-1] = x[0]` is exactly
//! diagonalised by the orthonormal type-II cosine transform, so every implicit
//! solve in this crate is a pointwise multiplication in cosine space.
//!
//! All quadrature is midpoint (cell-volume weights). Because the weights are
//! uniform, the discrete Laplacian is symmetric both in the Euclidean and in
//! the discrete `H` inner product.

mod field;
mod ops;
mod spectral;

pub use field::Field;
pub use ops::{
    check_compactness_inequality, gradient_norm_sq, inner_h, inverse_neumann_laplacian,
    laplacian, mean, norm_h, norm_v, norm_vstar, norm_z, CompactnessCheck,
};
pub use spectral::SpectralField;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Orthonormal DCT-II table for one axis.
#[derive(Debug, Clone)]
struct AxisTable {
    n: usize,
    /// `matrix[k * n + i] = s_k cos(pi k (i + 1/2) / n)`.
    matrix: Vec<f64>,
    /// Discrete Neumann eigenvalues `-(2/h^2)(1 - cos(k pi / n))`.
    eigenvalues: Vec<f64>,
}

impl AxisTable {
    fn new(n: usize, h: f64) -> Self {
        let nf = n as f64;
        let mut matrix = vec![0.0; n * n];
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                matrix[k * n + i] = s * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
            }
        }
        let eigenvalues = (0..n)
            .map(|k| -(2.0 / (h * h)) * (1.0 - (PI * k as f64 / nf).cos()))
            .collect();
        Self {
            n,
            matrix,
            eigenvalues,
        }
    }
}

/// Spatial discretisation of the box `D = [0, L_0] x ... ` in one or two dimensions.
///
/// Immutable after construction; share it behind an [`Arc`].
#[derive(Debug)]
pub struct Grid {
    dims: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    axes: Vec<AxisTable>,
    /// Eigenvalues of the full Laplacian in spectral (row-major wavenumber) order.
    eigenvalues: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.lengths == other.lengths
    }
}

impl Grid {
    pub fn new(dims: &[usize], lengths: &[f64]) -> Result<Arc<Self>> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::Config(format!(
                "grid must have 1 or 2 dimensions, got {}",
                dims.len()
            )));
        }
        if dims.len() != lengths.len() {
            return Err(Error::Config(format!(
                "grid has {} point counts but {} lengths",
                dims.len(),
                lengths.len()
            )));
        }
        if let Some(n) = dims.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!(
                "each axis needs at least 4 points, got {n}"
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!(
                "domain lengths must be positive and finite, got {l}"
            )));
        }
        let spacing: Vec<f64> = dims
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let axes: Vec<AxisTable> = dims
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| AxisTable::new(n, h))
            .collect();
        let eigenvalues = match axes.as_slice() {
            [a] => a.eigenvalues.clone(),
            [a, b] => a
                .eigenvalues
                .iter()
                .flat_map(|&la| b.eigenvalues.iter().map(move |&lb| la + lb))
                .collect(),
            _ => unreachable!(),
        };
        Ok(Arc::new(Self {
            dims: dims.to_vec(),
            lengths: lengths.to_vec(),
            spacing,
            axes,
            eigenvalues,
        }))
    }

    /// One-dimensional grid on `[0, length]`.
    pub fn line(npoints: usize, length: f64) -> Result<Arc<Self>> {
        Self::new(&[npoints], &[length])
    }

    /// Two-dimensional grid on `[0, lx] x [0, ly]`, stored row-major (axis 0 slowest).
    pub fn rect(npoints: [usize; 2], lengths: [f64; 2]) -> Result<Arc<Self>> {
        Self::new(&npoints, &lengths)
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of a single cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// `|D|`.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Cell-centre coordinate of point `i` along `axis`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing[axis]
    }

    /// Multi-index of flat index `idx`.
    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        match self.dims.as_slice() {
            [_] => [idx, 0],
            [_, n1] => [idx / n1, idx % n1],
            _ => unreachable!(),
        }
    }

    /// Eigenvalues of the discrete Neumann Laplacian, indexed like spectral coefficients.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Normalisation constant linking the zero cosine coefficient and the grid mean:
    /// `coefficient[0] = mean * sqrt(len)`.
    pub fn dc_normalization(&self) -> f64 {
        (self.len() as f64).sqrt()
    }

    fn check_len(&self, context: &'static str, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::Shape {
                context,
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Discrete Neumann Laplacian of raw grid values (stencil form).
    pub fn laplacian_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len("laplacian", x.len())?;
        let mut out = vec![0.0; x.len()];
        self.for_each_line(|axis, start, stride, n| {
            let inv_h2 = 1.0 / (self.spacing[axis] * self.spacing[axis]);
            for i in 0..n {
                let c = x[start + i * stride];
                let left = if i == 0 { c } else { x[start + (i - 1) * stride] };
                let right = if i + 1 == n { c } else { x[start + (i + 1) * stride] };
                out[start + i * stride] += (left - 2.0 * c + right) * inv_h2;
            }
        });
        Ok(out)
    }

    /// Calls `f(axis, start, stride, n)` once for every grid line along every axis.
    fn for_each_line(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        match self.dims.as_slice() {
            [n] => f(0, 0, 1, *n),
            [n0, n1] => {
                for j in 0..*n1 {
                    f(0, j, *n1, *n0);
                }
                for i in 0..*n0 {
                    f(1, i * n1, 1, *n1);
                }
            }
            _ => unreachable!(),
        }
    }

    /// Orthonormal DCT-II along every axis, in place.
    pub(crate) fn dct_forward_in_place(&self, x: &mut [f64]) {
        self.transform_in_place(x, false);
    }

    /// Inverse of [`Grid::dct_forward_in_place`] (DCT-III), in place.
    pub(crate) fn dct_inverse_in_place(&self, x: &mut [f64]) {
        self.transform_in_place(x, true);
    }

    fn transform_in_place(&self, x: &mut [f64], inverse: bool) {
        debug_assert_eq!(x.len(), self.len());
        let nmax = *self.dims.iter().max().unwrap();
        let mut line = vec![0.0; nmax];
        let mut res = vec![0.0; nmax];
        self.for_each_line(|axis, start, stride, n| {
            let table = &self.axes[axis];
            debug_assert_eq!(table.n, n);
            for i in 0..n {
                line[i] = x[start + i * stride];
            }
            if inverse {
                res[..n].fill(0.0);
                for (k, &c) in line[..n].iter().enumerate() {
                    let row = &table.matrix[k * n..(k + 1) * n];
                    for (r, m) in res[..n].iter_mut().zip(row) {
                        *r += m * c;
                    }
                }
            } else {
                for (r, row) in res[..n].iter_mut().zip(table.matrix.chunks_exact(n)) {
                    *r = row.iter().zip(&line[..n]).map(|(m, v)| m * v).sum();
                }
            }
            for i in 0..n {
                x[start + i * stride] = res[i];
            }
        });
    }

    /// Applies the operator that is diagonal in cosine space with the given symbol.
    pub(crate) fn apply_symbol(&self, symbol: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(symbol.len(), self.len());
        let mut buf = x.to_vec();
        self.dct_forward_in_place(&mut buf);
        for (c, s) in buf.iter_mut().zip(symbol) {
            *c *= s;
        }
        self.dct_inverse_in_place(&mut buf);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::line(3, 1.0).is_err());
        assert!(Grid::line(8, 0.0).is_err());
        assert!(Grid::line(8, f64::NAN).is_err());
        assert!(Grid::new(&[8, 8, 8], &[1.0, 1.0, 1.0]).is_err());
        assert!(Grid::new(&[8, 8], &[1.0]).is_err());
    }

    #[test]
    fn spacing_and_counts() {
        let g = Grid::rect([8, 16], [2.0, 1.0]).unwrap();
        assert_eq!(g.len(), 128);
        assert_eq!(g.spacing(), &[0.25, 1.0 / 16.0]);
        assert!((g.cell_volume() * g.len() as f64 - g.volume()).abs() < 1e-15);
        assert_eq!(g.unravel(17), [1, 1]);
    }

    #[test]
    fn dct_is_orthonormal_round_trip() {
        let g = Grid::rect([6, 10], [1.0, 3.0]).unwrap();
        let x: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let mut y = x.clone();
        g.dct_forward_in_place(&mut y);
        let energy_x: f64 = x.iter().map(|v| v * v).sum();
        let energy_y: f64 = y.iter().map(|v| v * v).sum();
        assert!((energy_x - energy_y).abs() < 1e-12 * energy_x);
        g.dct_inverse_in_place(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn laplacian_values_checks_length() {
        let g = Grid::line(8, 1.0).unwrap();
        assert!(matches!(
            g.laplacian_values(&[0.0; 7]),
            Err(Error::Shape { expected: 8, got: 7, .. })
        ));
    }
}
