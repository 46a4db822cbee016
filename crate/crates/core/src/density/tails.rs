//! Sub-Gaussian tail checks on the axis `|y - z0|^{1 + 1/rho} / kappa_t^2`.

use serde::{Deserialize, Serialize};

use super::DensityEstimate;
use crate::error::{Error, Result};
use crate::linalg::linear_fit;

const MIN_R2: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `1 / slope`.
    pub c2_hat: f64,
    pub window: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub pass: bool,
}

fn fit(x: Vec<f64>, y: Vec<f64>) -> Result<TailFit> {
    if x.len() < 3 {
        return Err(Error::EmptyWindow);
    }
    let (slope, intercept, r2) = linear_fit(&x, &y);
    let r2 = if r2.is_finite() { r2 } else { 0.0 };
    Ok(TailFit { slope, intercept, r2, c2_hat: 1.0 / slope, window: x.len(), x, y, pass: slope > 0.0 && r2 >= MIN_R2 })
}

/// Regresses `-log p` against `|y - z0|^{1 + 1/rho} / kappa_t^2` over the points
/// where the estimate exceeds ten standard errors.
///
/// Only the radial upper envelope enters the fit: a point is kept when no point at
/// the same or larger radius has a higher density. The bound is on the worst
/// direction, and pooling directions with different constants spoils the fit.
pub fn tail_fit(est: &DensityEstimate, z0: &[f64], rho: f64, kappa_t: f64) -> Result<TailFit> {
    if z0.len() != est.axes.len() {
        return Err(Error::DimensionMismatch("z0 and density dimension differ".into()));
    }
    let e = 1.0 + 1.0 / rho;
    let mut pts = Vec::new();
    for i in 0..est.len() {
        let (p, se) = (est.values[i], est.se[i]);
        if !(p > 10.0 * se) || p <= 0.0 {
            continue;
        }
        let r = est.point(i).iter().zip(z0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        pts.push((r, p));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut top = f64::NEG_INFINITY;
    let mut env = Vec::new();
    for (r, p) in pts {
        if p >= top {
            top = p;
            env.push((r, p));
        }
    }
    env.reverse();
    let x = env.iter().map(|(r, _)| r.powf(e) / (kappa_t * kappa_t)).collect();
    let y = env.iter().map(|(_, p)| -p.ln()).collect();
    fit(x, y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailProbabilityReport {
    pub levels: Vec<f64>,
    pub exceedance: Vec<f64>,
    pub se: Vec<f64>,
    pub fit: Option<TailFit>,
    pub pass: bool,
}

/// Empirical `P(sup_{s <= tau} |Z_s - z0| >= level)`, fitted on the same axis as
/// [`tail_fit`]. Levels below the median and probabilities within ten standard
/// errors of zero are excluded from the fit.
pub fn tail_probability_check(sup_dev: &[f64], levels: &[f64], rho: f64, kappa_tau: f64) -> TailProbabilityReport {
    let n = sup_dev.len() as f64;
    let mut sorted = sup_dev.to_vec();
    sorted.sort_by(f64::total_cmp);
    let exceedance: Vec<f64> = levels.iter().map(|&l| (sorted.len() - sorted.partition_point(|&v| v < l)) as f64 / n).collect();
    let se: Vec<f64> = exceedance.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    let e = 1.0 + 1.0 / rho;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for ((&l, &p), &s) in levels.iter().zip(&exceedance).zip(&se) {
        if p <= 0.5 && p > 10.0 * s && p > 0.0 {
            x.push(l.powf(e) / (kappa_tau * kappa_tau));
            y.push(-p.ln());
        }
    }
    let fit = fit(x, y).ok();
    let pass = fit.as_ref().is_some_and(|f| f.pass);
    TailProbabilityReport { levels: levels.to_vec(), exceedance, se, fit, pass }
}

/// `P(sup_{s <= tau} |B_s| >= y)` for a standard Brownian motion, by the
/// reflection-principle series.
pub fn brownian_sup_tail(y: f64, tau: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let pi = std::f64::consts::PI;
    let mut below = 0.0;
    for k in 0..200 {
        let m = (2 * k + 1) as f64;
        let term = (-m * m * pi * pi * tau / (8.0 * y * y)).exp() / m;
        below += if k % 2 == 0 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (1.0 - 4.0 / pi * below).clamp(0.0, 1.0)
}
