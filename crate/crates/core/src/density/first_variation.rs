//! Samples of the first variation `G_1(h) = J_1(h) int Jinv_s(h) V(Phi_s(h)) dX_s`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovKernel;
use crate::error::Result;
use crate::gaussian_path::{CMElement, PathSampler};
use crate::grid::TimeGrid;
use crate::malliavin::{derivative_kernel, deterministic_malliavin_matrix};
use crate::rde::{solve_skeleton, VectorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    pub n: usize,
    pub n_paths: usize,
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Row-major empirical covariance.
    pub cov: Vec<f64>,
    pub cov_se: Vec<f64>,
    /// Deterministic Malliavin matrix of `Phi_1(h)`.
    pub gamma: Vec<f64>,
    pub max_cov_z: f64,
    pub max_mean_z: f64,
    pub pass: bool,
}

/// Left-point Riemann-Stieltjes sums of the skeleton's derivative kernel against
/// sampled drivers; compared with the deterministic Malliavin matrix.
#[allow(clippy::too_many_arguments)]
pub fn first_variation_samples(h: &CMElement, k: &CovKernel, vf: &dyn VectorField, z0: &[f64], grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<FirstVariation> {
    let flow = solve_skeleton(h, grid, vf, z0)?;
    let big_n = grid.n();
    let kt = derivative_kernel(&flow, vf, big_n)?;
    let gram = k.gram(grid)?;
    let gamma = deterministic_malliavin_matrix(h, vf, z0, &gram)?;
    let (n, d) = (vf.state_dim(), vf.driver_dim());
    let sampler = PathSampler::new(k, grid, d, seed)?;
    let rows: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let x = sampler.sample_path(p);
            let mut g = vec![0.0; n];
            for i in 0..big_n {
                let ki = kt.at(i);
                for c in 0..d {
                    let dx = x[(i + 1) * d + c] - x[i * d + c];
                    for r in 0..n {
                        g[r] += ki[r * d + c] * dx;
                    }
                }
            }
            g
        })
        .collect();
    let samples: Vec<f64> = rows.into_iter().flatten().collect();
    let m = n_paths as f64;
    let mean: Vec<f64> = (0..n).map(|r| (0..n_paths).map(|p| samples[p * n + r]).sum::<f64>() / m).collect();
    let mut cov = vec![0.0; n * n];
    let mut cov_se = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let prods: Vec<f64> = (0..n_paths).map(|p| (samples[p * n + a] - mean[a]) * (samples[p * n + b] - mean[b])).collect();
            let c = prods.iter().sum::<f64>() / (m - 1.0);
            let var = prods.iter().map(|x| (x - c).powi(2)).sum::<f64>() / (m - 1.0);
            cov[a * n + b] = c;
            cov_se[a * n + b] = (var / m).sqrt();
        }
    }
    let mean_se: Vec<f64> = (0..n).map(|a| (cov[a * n + a] / m).sqrt()).collect();
    let max_cov_z = (0..n * n).map(|i| (cov[i] - gamma.gamma[i]).abs() / cov_se[i]).fold(0.0, f64::max);
    let max_mean_z = (0..n).map(|a| mean[a].abs() / mean_se[a]).fold(0.0, f64::max);
    Ok(FirstVariation {
        n,
        n_paths,
        samples,
        mean,
        mean_se,
        cov,
        cov_se,
        gamma: gamma.gamma,
        max_cov_z,
        max_mean_z,
        pass: max_cov_z <= 5.0 && max_mean_z <= 3.0,
    })
}
