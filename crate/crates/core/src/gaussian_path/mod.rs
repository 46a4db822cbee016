//! Exact Gaussian sampling on a grid and Cameron-Martin arithmetic.

mod cameron_martin;
mod io;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use cameron_martin::{cm_inner, wiener_integral, CMElement};
pub use io::{path_csv, read_ensemble, write_ensemble, write_path_csv};

use crate::covariance::{CovKernel, Gram};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::cholesky_jitter;
use crate::rng;

/// Shared Cholesky factor for drawing any number of paths on one grid.
#[derive(Clone, Debug)]
pub struct PathSampler {
    kernel: CovKernel,
    gram: Gram,
    chol: DMatrix<f64>,
    jitter: f64,
    d: usize,
    seed: u64,
}

impl PathSampler {
    pub fn new(k: &CovKernel, grid: &TimeGrid, d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("driver dimension must be positive".into()));
        }
        let gram = k.gram(grid)?;
        let (chol, jitter) = cholesky_jitter(&gram.interior())?;
        Ok(Self { kernel: k.clone(), gram, chol, jitter, d, seed })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.gram.grid()
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn kernel(&self) -> &CovKernel {
        &self.kernel
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Path `index` as node-major values, `out[i * d + j] = X^j_{t_i}`.
    pub fn sample_into(&self, index: u64, out: &mut [f64]) {
        let n = self.grid().n();
        let d = self.d;
        debug_assert_eq!(out.len(), (n + 1) * d);
        let mut z = vec![0.0; n];
        for j in 0..d {
            let mut r = rng::stream(self.seed, index, j as u64);
            rng::fill_normal(&mut r, &mut z);
            out[j] = 0.0;
            for i in 0..n {
                let row = self.chol.row(i);
                let mut acc = 0.0;
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    acc += row[k] * zk;
                }
                out[(i + 1) * d + j] = acc;
            }
        }
    }

    pub fn sample_path(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; (self.grid().n() + 1) * self.d];
        self.sample_into(index, &mut out);
        out
    }

    pub fn ensemble(&self, n_paths: usize) -> PathEnsemble {
        let len = (self.grid().n() + 1) * self.d;
        let mut data = vec![0.0; n_paths * len];
        data.par_chunks_mut(len).enumerate().for_each(|(p, chunk)| self.sample_into(p as u64, chunk));
        PathEnsemble {
            grid: self.grid().clone(),
            d: self.d,
            n_paths,
            data,
            seed: self.seed,
            kernel: self.kernel.id(),
        }
    }
}

/// Sampled paths, path-major, node-major within a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub d: usize,
    pub n_paths: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub kernel: String,
}

impl PathEnsemble {
    pub fn path(&self, p: usize) -> &[f64] {
        let len = (self.grid.n() + 1) * self.d;
        &self.data[p * len..(p + 1) * len]
    }

    pub fn value(&self, p: usize, node: usize, component: usize) -> f64 {
        self.path(p)[node * self.d + component]
    }
}

/// Draws `n_paths` paths with `d` i.i.d. components.
pub fn sample(k: &CovKernel, grid: &TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    Ok(PathSampler::new(k, grid, d, seed)?.ensemble(n_paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::KernelSpec;

    fn moments(e: &PathEnsemble, node: usize) -> (f64, f64) {
        let n = e.n_paths as f64;
        let mean = (0..e.n_paths).map(|p| e.value(p, node, 0)).sum::<f64>() / n;
        let var = (0..e.n_paths).map(|p| (e.value(p, node, 0) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn brownian_terminal_variance() {
        let k = CovKernel::new(KernelSpec::brownian(1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 256).unwrap();
        let e = sample(&k, &grid, 1, 100_000, 11).unwrap();
        let (mean, var) = moments(&e, 256);
        assert!((var - 1.0).abs() < 0.02, "{var}");
        assert!(mean.abs() < 3.0 / (1e5f64).sqrt());
        assert!((0..10).all(|p| e.value(p, 0, 0) == 0.0));
    }

    #[test]
    fn fbm_cross_moment() {
        // E[X_{0.5} X_1] = (0.5^{0.8} + 1 - 0.5^{0.8}) / 2 = 0.5.
        let k = CovKernel::new(KernelSpec::fbm(0.4, 1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let e = sample(&k, &grid, 2, 50_000, 3).unwrap();
        for j in 0..2 {
            let xs: Vec<f64> = (0..e.n_paths).map(|p| e.value(p, 32, j) * e.value(p, 64, j)).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            assert!((m - 0.5).abs() < 4.0 * sd / (xs.len() as f64).sqrt(), "{m}");
        }
        let cross = (0..e.n_paths).map(|p| e.value(p, 64, 0) * e.value(p, 64, 1)).sum::<f64>() / e.n_paths as f64;
        assert!(cross.abs() < 0.03);
    }

    #[test]
    fn worker_count_does_not_change_draws() {
        let k = CovKernel::new(KernelSpec::fbm(0.4, 1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let s = PathSampler::new(&k, &grid, 2, 5).unwrap();
        let pools: Vec<_> = [1, 4, 16]
            .iter()
            .map(|&w| rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap())
            .collect();
        let runs: Vec<_> = pools.iter().map(|p| p.install(|| s.ensemble(200))).collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(runs[0].path(17), s.sample_path(17).as_slice());
    }
}
