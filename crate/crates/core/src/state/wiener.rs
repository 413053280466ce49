use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    final_time: f64,
    nsteps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, nsteps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::Config(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if nsteps == 0 {
            return Err(Error::Config("need at least one time step".into()));
        }
        Ok(Self { final_time, nsteps })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn nsteps(&self) -> usize {
        self.nsteps
    }

    /// Step size `τ = T / nsteps`.
    pub fn tau(&self) -> f64 {
        self.final_time / self.nsteps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.tau() * n as f64
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            final_time: self.final_time,
            nsteps: self.nsteps * factor,
        }
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in an ensemble: `splitmix64(base ^ splitmix64(index))`.
///
/// Depends only on `(base_seed, index)`, never on scheduling.
pub fn path_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Brownian increments `Δβ_{k,n}` for `K` independent scalar Brownian motions.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    nsteps: usize,
    nmodes: usize,
    tau: f64,
    /// Row-major `[nsteps × nmodes]`.
    increments: Vec<f64>,
}

impl WienerPath {
    /// Draws i.i.d. `N(0, τ)` increments from a ChaCha12 stream seeded with `seed`,
    /// step-major then mode-major.
    pub fn sample(nmodes: usize, time: &TimeGrid, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sd = time.tau().sqrt();
        let increments = (0..time.nsteps() * nmodes)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                sd * g
            })
            .collect();
        Self {
            seed,
            nsteps: time.nsteps(),
            nmodes,
            tau: time.tau(),
            increments,
        }
    }

    /// All-zero increments (deterministic dynamics with `nmodes` inert modes).
    pub fn zero(nmodes: usize, time: &TimeGrid) -> Self {
        Self {
            seed: 0,
            nsteps: time.nsteps(),
            nmodes,
            tau: time.tau(),
            increments: vec![0.0; time.nsteps() * nmodes],
        }
    }

    pub fn from_increments(nmodes: usize, time: &TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != time.nsteps() * nmodes {
            return Err(Error::Shape {
                context: "wiener increments",
                expected: time.nsteps() * nmodes,
                got: increments.len(),
            });
        }
        Ok(Self {
            seed: 0,
            nsteps: time.nsteps(),
            nmodes,
            tau: time.tau(),
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nsteps(&self) -> usize {
        self.nsteps
    }

    pub fn nmodes(&self) -> usize {
        self.nmodes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increments of step `n` (one per mode).
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.nmodes..(n + 1) * self.nmodes]
    }

    /// The same Brownian path observed on a grid `factor` times coarser:
    /// consecutive increments are summed.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.nsteps.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.nsteps
            )));
        }
        let nsteps = self.nsteps / factor;
        let mut increments = vec![0.0; nsteps * self.nmodes];
        for n in 0..nsteps {
            for j in 0..factor {
                let fine = self.increment(n * factor + j);
                for (acc, v) in increments[n * self.nmodes..(n + 1) * self.nmodes]
                    .iter_mut()
                    .zip(fine)
                {
                    *acc += v;
                }
            }
        }
        Ok(Self {
            seed: self.seed,
            nsteps,
            nmodes: self.nmodes,
            tau: self.tau * factor as f64,
            increments,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_when_no_modes() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        assert!(WienerPath::sample(0, &tg, 3).increments().is_empty());
    }

    #[test]
    fn reproducible() {
        let tg = TimeGrid::new(0.05, 200).unwrap();
        assert_eq!(WienerPath::sample(2, &tg, 42), WienerPath::sample(2, &tg, 42));
        assert_ne!(WienerPath::sample(2, &tg, 42), WienerPath::sample(2, &tg, 43));
    }

    #[test]
    fn moments() {
        let tg = TimeGrid::new(0.05, 50_000).unwrap();
        let wp = WienerPath::sample(2, &tg, 7);
        let n = wp.increments().len() as f64;
        let tau = tg.tau();
        let m = wp.increments().iter().sum::<f64>() / n;
        assert!(m.abs() <= 4.0 * (tau / n).sqrt(), "mean {m}");
        for k in 0..2 {
            let var: f64 = (0..tg.nsteps()).map(|s| wp.increment(s)[k].powi(2)).sum::<f64>() / tg.nsteps() as f64;
            assert!((var / tau - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn coarsen_sums_increments() {
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let wp = WienerPath::sample(3, &tg, 1);
        let c = wp.coarsen(4).unwrap();
        assert_eq!(c.nsteps(), 2);
        assert!((c.tau() - 0.5).abs() < 1e-15);
        let direct: f64 = (4..8).map(|n| wp.increment(n)[1]).sum();
        assert!((c.increment(1)[1] - direct).abs() < 1e-15);
        assert!(wp.coarsen(3).is_err());
    }

    #[test]
    fn path_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| path_seed(99, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(path_seed(99, 5), path_seed(99, 5));
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let tg = TimeGrid::new(0.05, 200).unwrap();
        assert!((tg.tau() - 2.5e-4).abs() < 1e-18);
        assert_eq!(tg.refined(2).nsteps(), 400);
    }
}
