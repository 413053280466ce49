use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{path_seed, TimeGrid, WienerPath};

/// Size and base seed of a Monte Carlo ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub npaths: usize,
    pub base_seed: u64,
}

impl EnsembleSpec {
    pub fn new(npaths: usize, base_seed: u64) -> Result<Self> {
        if npaths == 0 {
            return Err(Error::Config("ensemble needs at least one path".into()));
        }
        Ok(Self { npaths, base_seed })
    }

    /// Seed of path `i`; see [`path_seed`].
    pub fn seed(&self, i: usize) -> u64 {
        path_seed(self.base_seed, i as u64)
    }
}

/// Frozen Brownian paths shared by every cost and gradient evaluation
/// (common random numbers), so that the Monte Carlo reduced cost is a
/// deterministic smooth function of the control.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    spec: EnsembleSpec,
    paths: Vec<WienerPath>,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec, nmodes: usize, time: &TimeGrid) -> Self {
        let paths = (0..spec.npaths)
            .into_par_iter()
            .map(|i| WienerPath::sample(nmodes, time, spec.seed(i)))
            .collect();
        Self { spec, paths }
    }

    /// Samples at `factor` times finer resolution and aggregates back, so that
    /// ensembles built with different factors observe the same Brownian paths.
    pub fn new_refined(spec: EnsembleSpec, nmodes: usize, time: &TimeGrid, fine_factor: usize) -> Result<Self> {
        let fine = time.refined(fine_factor);
        let paths = (0..spec.npaths)
            .into_par_iter()
            .map(|i| WienerPath::sample(nmodes, &fine, spec.seed(i)).coarsen(fine_factor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, paths })
    }

    pub fn from_paths(spec: EnsembleSpec, paths: Vec<WienerPath>) -> Result<Self> {
        if paths.len() != spec.npaths {
            return Err(Error::Shape {
                context: "ensemble paths",
                expected: spec.npaths,
                got: paths.len(),
            });
        }
        Ok(Self { spec, paths })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[WienerPath] {
        &self.paths
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.paths.iter().map(|p| p.seed()).collect()
    }

    /// Every path coarsened by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Ok(Self {
            spec: self.spec,
            paths: self
                .paths
                .iter()
                .map(|p| p.coarsen(factor))
                .collect::<Result<_>>()?,
        })
    }

    /// Runs `f` on every path in parallel, collecting results in path order.
    /// Failures are aggregated into [`Error::Ensemble`].
    pub fn map_paths<T: Send>(
        &self,
        f: impl Fn(usize, &WienerPath) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        let results: Vec<Result<T>> = self
            .paths
            .par_iter()
            .enumerate()
            .map(|(i, p)| f(i, p))
            .collect();
        collect_paths(results)
    }
}

pub(crate) fn collect_paths<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = results.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed == 0 {
        return Ok(results.into_iter().map(|r| r.unwrap()).collect());
    }
    let (first_path, first) = results
        .into_iter()
        .enumerate()
        .find_map(|(i, r)| r.err().map(|e| (i, e)))
        .unwrap();
    Err(Error::Ensemble {
        failed,
        total,
        first_path,
        first: Box::new(first),
    })
}

/// Pairwise (tree) reduction in a fixed order, independent of thread scheduling.
pub fn pairwise_reduce<T: Clone>(items: &[T], add: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (a, b) = items.split_at(n / 2);
            Some(add(&pairwise_reduce(a, add)?, &pairwise_reduce(b, add)?))
        }
    }
}

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_reduce(values, &|a, b| a + b).unwrap_or(0.0) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_reduce(&dev, &|a, b| a + b).unwrap() / (n - 1.0);
    (mean, (var / n).sqrt())
}
