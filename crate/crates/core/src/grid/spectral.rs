use std::sync::Arc;

use super::{Field, Grid};

/// Cosine-transform coefficients of a field, indexed by wavenumber
/// (row-major over the axes, like the field itself).
///
/// The transform is the orthonormal DCT-II, so the zero coefficient equals
/// `mean * grid.dc_normalization()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coefficients: Vec<f64>,
}

impl SpectralField {
    pub fn from_field(x: &Field) -> Self {
        let mut coefficients = x.values().to_vec();
        x.grid().dct_forward_in_place(&mut coefficients);
        Self {
            grid: x.grid().clone(),
            coefficients,
        }
    }

    pub fn to_field(&self) -> Field {
        let mut values = self.coefficients.clone();
        self.grid.dct_inverse_in_place(&mut values);
        Field::from_raw(&self.grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    /// Applies the Laplacian as a diagonal multiplication.
    pub fn laplacian(&self) -> SpectralField {
        let coefficients = self
            .coefficients
            .iter()
            .zip(self.grid.eigenvalues())
            .map(|(c, l)| c * l)
            .collect();
        Self {
            grid: self.grid.clone(),
            coefficients,
        }
    }
}

impl Field {
    pub fn to_spectral(&self) -> SpectralField {
        SpectralField::from_field(self)
    }
}
