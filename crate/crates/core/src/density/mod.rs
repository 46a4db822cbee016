//! Monte Carlo densities of RDE solutions, tail checks and small-noise asymptotics.

mod first_variation;
mod optim;
mod rate;
mod tails;
mod varadhan;

pub use first_variation::{first_variation_samples, FirstVariation};
pub use optim::{bfgs, fd_gradient, BfgsOptions, BfgsResult};
pub use rate::{rate_function, PenaltyStage, RateConfig, RateFunctionResult, SkeletonBasis, StartSummary};
pub use tails::{brownian_sup_tail, tail_fit, tail_probability_check, TailFit, TailProbabilityReport};
pub use varadhan::{richardson_limit, varadhan_curve, varadhan_sweep, VaradhanPoint, VaradhanSweep, NOISE_FLOOR};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::gaussian_path::PathSampler;
use crate::grid::TimeGrid;
use crate::rde::{self, SolveOptions, VectorField};
use crate::rough_lift::RoughPath2;

/// Terminal values and running sup deviations of an ensemble of solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub n: usize,
    pub n_paths: usize,
    /// Path-major `Z_t`, `n` values per path.
    pub terminal: Vec<f64>,
    /// `sup_{s <= t} |Z_s - z0|` per path.
    pub sup_dev: Vec<f64>,
}

impl Simulation {
    pub fn value(&self, p: usize) -> &[f64] {
        &self.terminal[p * self.n..(p + 1) * self.n]
    }
}

/// Solves `n_paths` independent copies of `dZ = V_0 dt + eps V dX` up to node `t_node`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(k: &CovKernel, grid: &TimeGrid, vf: &dyn VectorField, z0: &[f64], eps: f64, t_node: usize, n_paths: usize, seed: u64) -> Result<Simulation> {
    if t_node == 0 || t_node > grid.n() {
        return Err(Error::NodeNotOnGrid(t_node as f64));
    }
    let d = vf.driver_dim();
    let n = vf.state_dim();
    let prefix = grid.prefix(t_node)?;
    let sampler = PathSampler::new(k, &prefix, d, seed)?;
    let out: Vec<Result<(Vec<f64>, f64)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let rp = RoughPath2::lift(&prefix, d, &sampler.sample_path(p))?;
            let flow = rde::solve_with(&rp, vf, z0, eps, SolveOptions { jacobian: false, ..Default::default() })?;
            Ok((flow.terminal().to_vec(), flow.sup_deviation()))
        })
        .collect();
    let mut terminal = Vec::with_capacity(n_paths * n);
    let mut sup_dev = Vec::with_capacity(n_paths);
    for r in out {
        let (z, s) = r?;
        terminal.extend(z);
        sup_dev.push(s);
    }
    Ok(Simulation { n, n_paths, terminal, sup_dev })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Bandwidth {
    #[default]
    Silverman,
    Fixed(Vec<f64>),
}


/// Silverman's rule per dimension.
pub fn silverman(samples: &[f64], n: usize) -> Vec<f64> {
    let m = samples.len() / n;
    let factor = (4.0 / (n as f64 + 2.0)).powf(1.0 / (n as f64 + 4.0)) * (m as f64).powf(-1.0 / (n as f64 + 4.0));
    (0..n)
        .map(|j| {
            let mean = (0..m).map(|p| samples[p * n + j]).sum::<f64>() / m as f64;
            let var = (0..m).map(|p| (samples[p * n + j] - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0).max(1.0);
            factor * var.sqrt()
        })
        .collect()
}

/// Gaussian product-kernel density estimate on a tensor grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// One axis per state dimension; points are the tensor product, last axis fastest.
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub n_paths: usize,
    pub t: f64,
    /// Trapezoid integral of the estimate over the window.
    pub mass: f64,
}

impl DensityEstimate {
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut out = vec![0.0; self.axes.len()];
        for (j, ax) in self.axes.iter().enumerate().rev() {
            out[j] = ax[rem % ax.len()];
            rem /= ax.len();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass_ok(&self) -> bool {
        self.mass >= 0.95 && self.mass <= 1.0 + 1e-6
    }
}

fn kernel_at(samples: &[f64], n: usize, y: &[f64], h: &[f64]) -> (f64, f64) {
    let m = samples.len() / n;
    let norm: f64 = h.iter().map(|hj| 1.0 / (hj * (2.0 * std::f64::consts::PI).sqrt())).product();
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in 0..m {
        let mut q = 0.0;
        for j in 0..n {
            let u = (y[j] - samples[p * n + j]) / h[j];
            q += u * u;
        }
        let kv = norm * (-0.5 * q).exp();
        s1 += kv;
        s2 += kv * kv;
    }
    let mean = s1 / m as f64;
    let var = (s2 / m as f64 - mean * mean).max(0.0);
    (mean, (var / m as f64).sqrt())
}

/// KDE value and standard error at a single point.
pub fn kde_point(samples: &[f64], n: usize, y: &[f64], bandwidth: &[f64]) -> (f64, f64) {
    kernel_at(samples, n, y, bandwidth)
}

/// KDE of path-major samples on a tensor grid. Each point sums the samples in a
/// fixed order, so the output does not depend on the worker count.
pub fn kde(samples: &[f64], n: usize, axes: &[Vec<f64>], bandwidth: &Bandwidth, t: f64) -> Result<DensityEstimate> {
    if n == 0 || samples.is_empty() || !samples.len().is_multiple_of(n) || axes.len() != n {
        return Err(Error::DimensionMismatch("samples, axes and dimension disagree".into()));
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman(samples, n),
        Bandwidth::Fixed(h) => h.clone(),
    };
    if h.len() != n {
        return Err(Error::DimensionMismatch(format!("{} bandwidths for dimension {n}", h.len())));
    }
    if let Some(&bad) = h.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidBandwidth(bad));
    }
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut est = DensityEstimate { axes: axes.to_vec(), values: Vec::new(), se: Vec::new(), bandwidth: h.clone(), n_paths: samples.len() / n, t, mass: 0.0 };
    let pairs: Vec<(f64, f64)> = (0..total).into_par_iter().map(|i| kernel_at(samples, n, &est.point(i), &h)).collect();
    est.values = pairs.iter().map(|p| p.0).collect();
    est.se = pairs.iter().map(|p| p.1).collect();
    est.mass = trapezoid(&est.values, axes);
    Ok(est)
}

/// Tensor trapezoid rule over a grid with the last axis fastest.
pub fn trapezoid(values: &[f64], axes: &[Vec<f64>]) -> f64 {
    let weights: Vec<Vec<f64>> = axes
        .iter()
        .map(|ax| {
            let k = ax.len();
            (0..k)
                .map(|i| {
                    let left = if i > 0 { ax[i] - ax[i - 1] } else { 0.0 };
                    let right = if i + 1 < k { ax[i + 1] - ax[i] } else { 0.0 };
                    0.5 * (left + right)
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for (idx, v) in values.iter().enumerate() {
        let mut rem = idx;
        let mut w = 1.0;
        for ax in weights.iter().rev() {
            w *= ax[rem % ax.len()];
            rem /= ax.len();
        }
        total += w * v;
    }
    total
}

/// Monte Carlo density of `Z_t` on a tensor grid.
#[allow(clippy::too_many_arguments)]
pub fn estimate_density(
    k: &CovKernel,
    grid: &TimeGrid,
    vf: &dyn VectorField,
    z0: &[f64],
    t: f64,
    eps: f64,
    n_paths: usize,
    seed: u64,
    axes: &[Vec<f64>],
    bandwidth: &Bandwidth,
) -> Result<DensityEstimate> {
    let t_node = grid.index_of(t)?;
    let sim = simulate(k, grid, vf, z0, eps, t_node, n_paths, seed)?;
    kde(&sim.terminal, sim.n, axes, bandwidth, t)
}

/// `k` equispaced points on `[a, b]`.
pub fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![a];
    }
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}
