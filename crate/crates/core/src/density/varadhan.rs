//! Small-noise sweep of `eps^2 log p_eps(y)` at `t = 1`.

use serde::{Deserialize, Serialize};

use super::{kde_point, silverman, simulate};
use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rde::VectorField;

/// Minimum of `n_paths * p_hat(y) * bandwidth` for a trusted estimate.
pub const NOISE_FLOOR: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaradhanPoint {
    pub eps: f64,
    pub p_hat: f64,
    pub se: f64,
    pub bandwidth: Vec<f64>,
    /// `n_paths * p_hat * prod(bandwidth)`.
    pub score: f64,
    pub value: f64,
    pub above_floor: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaradhanSweep {
    pub y: Vec<f64>,
    pub d2: f64,
    pub points: Vec<VaradhanPoint>,
    pub limit: f64,
    /// `limit + d2`.
    pub gap: f64,
    /// Whether the curve is non-increasing in `1 / eps` up to two standard errors.
    pub monotone: bool,
}

impl VaradhanSweep {
    /// Extrapolates the three smallest `eps` of a curve sorted by decreasing `eps`.
    pub fn from_curve(y: &[f64], d2: f64, points: Vec<VaradhanPoint>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidParameter("need at least three eps values".into()));
        }
        let tail = &points[points.len() - 3..];
        let limit = richardson_limit([tail[0].eps, tail[1].eps, tail[2].eps], [tail[0].value, tail[1].value, tail[2].value]);
        let monotone = points.windows(2).all(|w| {
            let noise = 2.0 * (w[0].eps.powi(2) * w[0].se / w[0].p_hat + w[1].eps.powi(2) * w[1].se / w[1].p_hat);
            w[1].value <= w[0].value + noise
        });
        Ok(Self { y: y.to_vec(), d2, points, limit, gap: limit + d2, monotone })
    }
}

/// Intercept `a` of `v(eps) = a + b eps^2 + c eps^2 log eps` through three points.
pub fn richardson_limit(eps: [f64; 3], v: [f64; 3]) -> f64 {
    let m = nalgebra::Matrix3::from_fn(|r, c| match c {
        0 => 1.0,
        1 => eps[r] * eps[r],
        _ => eps[r] * eps[r] * eps[r].ln(),
    });
    let sol = m.lu().solve(&nalgebra::Vector3::from(v)).unwrap_or_else(|| nalgebra::Vector3::repeat(f64::NAN));
    sol[0]
}

/// `eps^2 log p_hat_eps(y)` at `t = 1` for each `eps`, sorted by decreasing `eps`.
#[allow(clippy::too_many_arguments)]
pub fn varadhan_curve(y: &[f64], k: &CovKernel, vf: &dyn VectorField, z0: &[f64], grid: &TimeGrid, eps_list: &[f64], n_paths: usize, seed: u64) -> Result<Vec<VaradhanPoint>> {
    let t_node = grid.index_of(1.0)?;
    let mut eps_sorted = eps_list.to_vec();
    if eps_sorted.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("eps values must be positive".into()));
    }
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::new();
    for &eps in &eps_sorted {
        let sim = simulate(k, grid, vf, z0, eps, t_node, n_paths, seed)?;
        let h = silverman(&sim.terminal, sim.n);
        let (p_hat, se) = kde_point(&sim.terminal, sim.n, y, &h);
        let score = n_paths as f64 * p_hat * h.iter().product::<f64>();
        points.push(VaradhanPoint { eps, p_hat, se, bandwidth: h, score, value: eps * eps * p_hat.ln(), above_floor: score >= NOISE_FLOOR });
    }
    Ok(points)
}

/// Sweep with the noise-floor gate on the smallest `eps`.
#[allow(clippy::too_many_arguments)]
pub fn varadhan_sweep(y: &[f64], d2: f64, k: &CovKernel, vf: &dyn VectorField, z0: &[f64], grid: &TimeGrid, eps_list: &[f64], n_paths: usize, seed: u64) -> Result<VaradhanSweep> {
    let points = varadhan_curve(y, k, vf, z0, grid, eps_list, n_paths, seed)?;
    if let Some(last) = points.last() {
        if !last.above_floor {
            return Err(Error::BelowNoiseFloor { eps: last.eps, score: last.score });
        }
    }
    VaradhanSweep::from_curve(y, d2, points)
}
