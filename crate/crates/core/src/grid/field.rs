use std::f64::consts::PI;
use std::sync::Arc;

use super::Grid;
use crate::error::{Error, Result};

/// A real scalar function sampled at the cell centres of a [`Grid`].
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Wraps raw values, checking the length and finiteness invariants.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                context: "field values",
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Precondition {
                what: "field values must be finite",
                value: *v,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at the cell centres. `f` receives one coordinate per axis.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let m = grid.unravel(idx);
                let xs: Vec<f64> = (0..grid.ndims())
                    .map(|axis| grid.coordinate(axis, m[axis]))
                    .collect();
                f(&xs)
            })
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Product of `cos(k_a pi x_a / L_a)` over the axes; an exact eigenfield of the
    /// discrete Laplacian. Missing wavenumbers count as 0.
    pub fn cosine_mode(grid: &Arc<Grid>, wavenumbers: &[usize]) -> Self {
        let lengths = grid.lengths().to_vec();
        let ks: Vec<f64> = (0..grid.ndims())
            .map(|a| wavenumbers.get(a).copied().unwrap_or(0) as f64)
            .collect();
        Self::from_fn(grid, |x| {
            x.iter()
                .zip(&ks)
                .zip(&lengths)
                .map(|((xa, k), l)| (k * PI * xa / l).cos())
                .product()
        })
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.same_grid(other));
        Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert!(self.same_grid(x));
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    /// Adds `c` to every value.
    pub fn shift(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_values_validates() {
        let g = Grid::line(4, 1.0).unwrap();
        assert!(Field::from_values(&g, vec![0.0; 3]).is_err());
        assert!(Field::from_values(&g, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(Field::from_values(&g, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn cosine_mode_samples_cell_centres() {
        let g = Grid::line(4, 2.0).unwrap();
        let f = Field::cosine_mode(&g, &[1]);
        let expect = (PI * 0.25 / 2.0).cos();
        assert!((f.values()[0] - expect).abs() < 1e-15);
        assert!((f.values()[3] + expect).abs() < 1e-15);
    }

    #[test]
    fn equality_needs_same_grid() {
        let a = Grid::line(4, 1.0).unwrap();
        let b = Grid::line(4, 2.0).unwrap();
        assert_ne!(Field::zeros(&a), Field::zeros(&b));
        assert_eq!(Field::zeros(&a), Field::zeros(&Grid::line(4, 1.0).unwrap()));
    }
}
