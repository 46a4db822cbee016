//! Numerical audits of the Cameron-Martin interpolation inequalities and of the
//! small-time scaling of the inverse Malliavin matrix.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::malliavin_matrix_with;
use crate::covariance::{check_hypotheses, kappa, CovKernel};
use crate::error::{Error, Result};
use crate::gaussian_path::PathSampler;
use crate::grid::TimeGrid;
use crate::rde::{self, VectorField};
use crate::rng;
use crate::rough_lift::RoughPath2;

/// Hoelder exponent used for the smooth test functions.
const GAMMA: f64 = 1.0;
const MAX_DEGREE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationDraw {
    pub index: usize,
    pub degree: usize,
    pub t: f64,
    pub h_norm_sq: f64,
    pub stieltjes: f64,
    pub min_bound: f64,
    pub sup: f64,
    pub holder: f64,
    pub total_variation: f64,
    /// `|f|_H^2 / (kappa_t^2 (|f|_1-var^2 + |f|_inf^2))`.
    pub c2_ratio: f64,
    /// `|f|_inf` divided by the right-hand side of the sup-norm interpolation bound.
    pub interp_ratio: f64,
    pub chain_ok: bool,
    pub interp_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationAudit {
    pub kernel: String,
    pub n: usize,
    pub c_x: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: Vec<(f64, f64)>,
    pub draws: Vec<InterpolationDraw>,
    pub chain_passes: usize,
    pub interp_passes: usize,
    pub worst_chain_violation: f64,
    pub worst_interp_ratio: f64,
    pub max_c2_ratio: f64,
    pub pass: bool,
}

/// Random trigonometric polynomial on `[0, T]` with standard normal coefficients.
fn trig_poly(seed: u64, index: usize, horizon: f64) -> (usize, impl Fn(f64) -> f64) {
    let mut r = rng::stream(seed, index as u64, 0);
    let degree = r.random_range(1..=MAX_DEGREE);
    let mut coef = vec![0.0; 2 * degree + 1];
    rng::fill_normal(&mut r, &mut coef);
    let w = 2.0 * std::f64::consts::PI / horizon;
    (degree, move |x: f64| {
        let mut s = coef[0];
        for m in 1..=degree {
            let a = w * m as f64 * x;
            s += coef[2 * m - 1] * a.cos() + coef[2 * m] * a.sin();
        }
        s
    })
}

/// Checks, for `n_fns` random smooth `f` and `t` in `{T/4, T/2, T}`,
/// `|f 1_[0,t]|_H^2 >= int f^2 R(dr, t) >= sigma_t^2 min f^2` and the sup-norm
/// interpolation bound with the grid estimates of `c_X` and `alpha`.
pub fn interpolation_audit(k: &CovKernel, grid: &TimeGrid, n_fns: usize, seed: u64) -> Result<InterpolationAudit> {
    let hyp = check_hypotheses(k, grid, None)?;
    if !hyp.pass {
        return Err(Error::GateNotPassed(format!("{} fails the covariance hypotheses", k.id())));
    }
    let (c_x, alpha) = (hyp.c_x_estimate, hyp.alpha_estimate);
    let gram = k.gram(grid)?;
    let q = gram.cell_cov();
    let n = grid.n();
    let t_nodes: Vec<usize> = [n / 4, n / 2, n].into_iter().filter(|&t| t > 0).collect();
    let mut kap = Vec::new();
    for &t in &t_nodes {
        let tt = grid.nodes()[t];
        kap.push((tt, kappa(k, 0.0, tt, grid)?));
    }
    let nodes = grid.nodes();
    let draws: Vec<InterpolationDraw> = (0..n_fns)
        .into_par_iter()
        .flat_map_iter(|index| {
            let (degree, f) = trig_poly(seed, index, grid.horizon());
            let fv: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
            let q = &q;
            t_nodes.iter().zip(&kap).map(move |(&t, &(tt, kappa_t))| {
                let mut h = 0.0;
                let mut stieltjes = 0.0;
                let mut sigma2 = 0.0;
                for i in 0..t {
                    let mut row = 0.0;
                    let mut hf = 0.0;
                    for j in 0..t {
                        row += q[(i, j)];
                        hf += q[(i, j)] * fv[j];
                    }
                    h += fv[i] * hf;
                    stieltjes += fv[i] * fv[i] * row;
                    sigma2 += row;
                }
                let vals = &fv[..t];
                let min_sq = vals.iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
                let sup = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let mut holder = 0.0f64;
                for a in 0..t {
                    for b in (a + 1)..t {
                        holder = holder.max((vals[b] - vals[a]).abs() / (nodes[b] - nodes[a]).powf(GAMMA));
                    }
                }
                let tv: f64 = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
                let min_bound = sigma2 * min_sq;
                let tol = 1e-10 * (h.abs() + stieltjes.abs()) + 1e-14;
                let chain_ok = h >= stieltjes - tol && stieltjes >= min_bound - tol;
                let hn = h.max(0.0).sqrt();
                let e = 2.0 * GAMMA + alpha;
                let rhs = 2.0 * f64::max(hn / sigma2.sqrt(), hn.powf(2.0 * GAMMA / e) * holder.powf(alpha / e) / c_x.sqrt());
                let interp_ratio = sup / rhs;
                InterpolationDraw {
                    index,
                    degree,
                    t: tt,
                    h_norm_sq: h,
                    stieltjes,
                    min_bound,
                    sup,
                    holder,
                    total_variation: tv,
                    c2_ratio: h / (kappa_t * kappa_t * (tv * tv + sup * sup)),
                    interp_ratio,
                    chain_ok,
                    interp_ok: interp_ratio <= 1.0 + 1e-9,
                }
            })
        })
        .collect();
    let chain_passes = draws.iter().filter(|d| d.chain_ok).count();
    let interp_passes = draws.iter().filter(|d| d.interp_ok).count();
    let worst_chain_violation = draws
        .iter()
        .map(|d| f64::max(d.stieltjes - d.h_norm_sq, d.min_bound - d.stieltjes))
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_interp_ratio = draws.iter().map(|d| d.interp_ratio).fold(0.0, f64::max);
    let max_c2_ratio = draws.iter().map(|d| d.c2_ratio).fold(0.0, f64::max);
    let pass = chain_passes == draws.len() && interp_passes == draws.len();
    Ok(InterpolationAudit {
        kernel: k.id(),
        n,
        c_x,
        alpha,
        gamma: GAMMA,
        kappa: kap,
        draws,
        chain_passes,
        interp_passes,
        worst_chain_violation,
        worst_interp_ratio,
        max_c2_ratio,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentScaling {
    pub times: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// `normalized[q][t] = quantile_q(1 / lambda_min(gamma_t)) * sigma_t^2`.
    pub normalized: Vec<Vec<f64>>,
    pub spread: Vec<f64>,
    pub n_paths: usize,
    pub pass: bool,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantiles of `1 / lambda_min(gamma_t)` at `t in {T/4, T/2, T}`, normalized by
/// `sigma_t^2`; passes when the normalized values agree within a factor 3.
pub fn inverse_moment_scaling(k: &CovKernel, vf: &dyn VectorField, z0: &[f64], grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<InverseMomentScaling> {
    let n = grid.n();
    if n < 4 || !n.is_multiple_of(4) {
        return Err(Error::InvalidParameter("grid size must be a multiple of 4".into()));
    }
    let d = vf.driver_dim();
    let sampler = PathSampler::new(k, grid, d, seed)?;
    let q = sampler.gram().cell_cov();
    let t_nodes = [n / 4, n / 2, n];
    let id = k.id();
    let lambdas: Vec<Result<[f64; 3]>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let rp = RoughPath2::lift(grid, d, &sampler.sample_path(p))?;
            let flow = rde::solve(&rp, vf, z0, 1.0)?;
            let mut out = [0.0; 3];
            for (o, &t) in out.iter_mut().zip(&t_nodes) {
                *o = malliavin_matrix_with(&flow, vf, &q, t, &id)?.min_eigenvalue();
            }
            Ok(out)
        })
        .collect();
    let mut per_t: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n_paths)).collect();
    for l in lambdas {
        let l = l?;
        for (v, x) in per_t.iter_mut().zip(l) {
            if !(x > 0.0) {
                return Err(Error::DegenerateMalliavin(x));
            }
            v.push(1.0 / x);
        }
    }
    for v in per_t.iter_mut() {
        v.sort_by(f64::total_cmp);
    }
    let times: Vec<f64> = t_nodes.iter().map(|&t| grid.nodes()[t]).collect();
    let sigma_sq: Vec<f64> = t_nodes.iter().map(|&t| sampler.gram().rect(0, t, 0, t)).collect();
    let quantiles = vec![0.5, 0.9];
    let normalized: Vec<Vec<f64>> =
        quantiles.iter().map(|&p| per_t.iter().zip(&sigma_sq).map(|(v, s)| quantile(v, p) * s).collect()).collect();
    let spread: Vec<f64> = normalized
        .iter()
        .map(|row| row.iter().fold(0.0f64, |m, x| m.max(*x)) / row.iter().fold(f64::INFINITY, |m, x| m.min(*x)))
        .collect();
    let pass = spread.iter().all(|&s| s <= 3.0);
    Ok(InverseMomentScaling { times, sigma_sq, quantiles, normalized, spread, n_paths, pass })
}
