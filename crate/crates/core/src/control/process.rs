use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::state::TimeGrid;

/// Deterministic control `u_0..u_{N−1}`, piecewise constant on the time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProcess {
    time: TimeGrid,
    fields: Vec<Field>,
}

impl ControlProcess {
    pub fn zeros(grid: &Arc<Grid>, time: TimeGrid) -> Self {
        Self {
            time,
            fields: vec![Field::zeros(grid); time.nsteps()],
        }
    }

    /// The same field at every step.
    pub fn constant_in_time(field: &Field, time: TimeGrid) -> Self {
        Self {
            time,
            fields: vec![field.clone(); time.nsteps()],
        }
    }

    pub fn from_fields(time: TimeGrid, fields: Vec<Field>) -> Result<Self> {
        if fields.len() != time.nsteps() {
            return Err(Error::Shape {
                context: "control process",
                expected: time.nsteps(),
                got: fields.len(),
            });
        }
        if fields.windows(2).any(|w| !w[0].same_grid(&w[1])) {
            return Err(Error::Config("control fields live on different grids".into()));
        }
        Ok(Self { time, fields })
    }

    /// Samples `f(t, x)` at `t = t_n` and the cell centres.
    pub fn from_fn(grid: &Arc<Grid>, time: TimeGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let fields = (0..time.nsteps())
            .map(|n| {
                let t = time.time(n);
                Field::from_fn(grid, |x| f(t, x))
            })
            .collect();
        Self { time, fields }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, n: usize) -> &Field {
        &self.fields[n]
    }

    pub fn into_fields(self) -> Vec<Field> {
        self.fields
    }

    /// `Σ_n τ ⟨u_n, v_n⟩_H`.
    pub fn inner(&self, other: &ControlProcess) -> f64 {
        let tau = self.time.tau();
        self.fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| tau * grid::inner_h(a, b))
            .sum()
    }

    /// Discrete `‖u‖_{L²(Q)}`.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Discrete `‖∇u‖_{L²(0,T;H)}`, reported for monitoring only.
    pub fn gradient_seminorm(&self) -> f64 {
        let tau = self.time.tau();
        self.fields
            .iter()
            .map(|f| tau * grid::gradient_norm_sq(f))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            time: self.time,
            fields: self.fields.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    pub fn add(&self, other: &ControlProcess) -> Self {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &ControlProcess) -> Self {
        self.zip(other, |a, b| a.sub(b))
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ControlProcess) {
        for (s, v) in self.fields.iter_mut().zip(&x.fields) {
            s.axpy(a, v);
        }
    }

    fn zip(&self, other: &ControlProcess, f: impl Fn(&Field, &Field) -> Field) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            time: self.time,
            fields: self
                .fields
                .iter()
                .zip(&other.fields)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_unit_control() {
        let g = Grid::line(16, 1.0).unwrap();
        let tg = TimeGrid::new(0.5, 10).unwrap();
        let u = ControlProcess::constant_in_time(&Field::constant(&g, 1.0), tg);
        assert!((u.norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(u.gradient_seminorm(), 0.0);
        assert!(ControlProcess::from_fields(tg, vec![Field::zeros(&g); 9]).is_err());
    }

    #[test]
    fn linear_ops() {
        let g = Grid::line(8, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let u = ControlProcess::from_fn(&g, tg, |t, x| t + x[0]);
        let mut v = u.scaled(2.0);
        v.axpy(-1.0, &u);
        assert_eq!(v, u);
        assert!(u.sub(&u).norm() == 0.0);
        assert!((u.add(&u).norm() - 2.0 * u.norm()).abs() < 1e-14);
    }
}
