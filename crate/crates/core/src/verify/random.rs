use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::control::ControlProcess;
use crate::grid::{Field, Grid};
use crate::state::{splitmix64, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Term {
    wavenumbers: [usize; 2],
    amplitude: f64,
    /// Oscillations over the horizon.
    frequency: f64,
    phase: f64,
}

/// Random smooth space-time function: a few low cosine modes in space, each
/// modulated by a slow cosine in time. It is defined on the continuum, so
/// discretising it at two resolutions gives consistent samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothRandom {
    terms: Vec<Term>,
}

impl SmoothRandom {
    /// Draws `nterms` terms with wavenumbers up to `kmax` and amplitudes
    /// uniform in `[-scale, scale]`.
    pub fn sample(rng: &mut impl Rng, ndims: usize, nterms: usize, kmax: usize, scale: f64) -> Self {
        let terms = (0..nterms)
            .map(|_| {
                let mut k = [0usize; 2];
                for kk in k.iter_mut().take(ndims) {
                    *kk = rng.random_range(0..=kmax);
                }
                Term {
                    wavenumbers: k,
                    amplitude: scale * rng.random_range(-1.0..1.0),
                    frequency: rng.random_range(0.0..2.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        Self { terms }
    }

    /// Deterministic draw keyed by `(seed, index)`.
    pub fn keyed(seed: u64, index: u64, ndims: usize, nterms: usize, kmax: usize, scale: f64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(0x5EED))));
        Self::sample(&mut rng, ndims, nterms, kmax, scale)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        for t in &mut s.terms {
            t.amplitude *= a;
        }
        s
    }

    /// Value at time fraction `s = t/T` and point `x` of a box with side `lengths`.
    pub fn value(&self, s: f64, x: &[f64], lengths: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let space: f64 = x
                    .iter()
                    .zip(lengths)
                    .zip(t.wavenumbers)
                    .map(|((xa, l), k)| (k as f64 * PI * xa / l).cos())
                    .product();
                t.amplitude * space * (2.0 * PI * t.frequency * s + t.phase).cos()
            })
            .sum()
    }

    pub fn control(&self, grid: &Arc<Grid>, time: TimeGrid) -> ControlProcess {
        let lengths = grid.lengths().to_vec();
        let horizon = time.final_time();
        ControlProcess::from_fn(grid, time, |t, x| self.value(t / horizon, x, &lengths))
    }

    /// Snapshot at `t = 0`.
    pub fn field(&self, grid: &Arc<Grid>) -> Field {
        let lengths = grid.lengths().to_vec();
        Field::from_fn(grid, |x| self.value(0.0, x, &lengths))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_draws_are_reproducible_and_distinct() {
        let a = SmoothRandom::keyed(1, 0, 1, 4, 3, 1.0);
        assert_eq!(a, SmoothRandom::keyed(1, 0, 1, 4, 3, 1.0));
        assert_ne!(a, SmoothRandom::keyed(1, 1, 1, 4, 3, 1.0));
        assert_ne!(a, SmoothRandom::keyed(2, 0, 1, 4, 3, 1.0));
    }

    #[test]
    fn discretisations_sample_the_same_function() {
        let f = SmoothRandom::keyed(3, 0, 1, 3, 2, 1.0);
        let tg = TimeGrid::new(0.1, 4).unwrap();
        let coarse = f.control(&Grid::line(8, 1.0).unwrap(), tg);
        let fine = f.control(&Grid::line(16, 1.0).unwrap(), tg.refined(2));
        let lengths = [1.0];
        for n in 0..4 {
            let s = n as f64 / 4.0;
            assert!((coarse.field(n).values()[0] - f.value(s, &[1.0 / 16.0], &lengths)).abs() < 1e-14);
            assert!((fine.field(2 * n).values()[0] - f.value(s, &[1.0 / 32.0], &lengths)).abs() < 1e-14);
        }
    }
}
