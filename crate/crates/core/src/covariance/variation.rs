//! Mixed (gamma, rho)-variation of a covariance over grid rectangles.
//!
//! For gamma = 1 the inner supremum is attained on the finest dissection (triangle
//! inequality), and the outer supremum over sub-grid dissections is computed exactly
//! by dynamic programming. For gamma > 1 the value is the maximum over products of
//! nested dyadic sub-grids, which keeps it non-decreasing under dyadic refinement.

use serde::{Deserialize, Serialize};

use super::{CovKernel, Gram};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl Rect {
    pub fn square(s: f64, t: f64) -> Self {
        Self { s, t, u: s, v: t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    pub value: f64,
    /// Same quantity on the half-resolution grid, when the grid can be coarsened.
    pub coarse: Option<f64>,
}

fn dyadic_cuts(a: usize, b: usize, step: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (a..b).step_by(step).collect();
    cuts.push(b);
    cuts
}

/// Mixed variation over node ranges `[a, b]` (first variable) and `[c, d]` (second).
pub fn mixed_on_gram(g: &Gram, (a, b): (usize, usize), (c, d): (usize, usize), gamma: f64, rho: f64) -> f64 {
    if a >= b || c >= d {
        return 0.0;
    }
    if gamma == 1.0 {
        let cols = d - c + 1;
        // col_inc[i][k] = R^{t_i t_{i+1}}_{t_c t_{c+k}} along the first variable.
        let col_inc: Vec<Vec<f64>> = (a..b)
            .map(|i| (0..cols).map(|k| g.rect(i, i + 1, c, c + k)).collect())
            .collect();
        let mut best = vec![f64::NEG_INFINITY; cols];
        best[0] = 0.0;
        for k in 1..cols {
            let mut acc = f64::NEG_INFINITY;
            for m in 0..k {
                let inner: f64 = col_inc.iter().map(|row| (row[k] - row[m]).abs()).sum();
                let cand = best[m] + inner.powf(rho);
                if cand > acc {
                    acc = cand;
                }
            }
            best[k] = acc;
        }
        return best[cols - 1].max(0.0).powf(1.0 / rho);
    }
    let mut out = 0.0f64;
    let mut p = 1;
    while p <= (b - a).next_power_of_two() {
        let rows = dyadic_cuts(a, b, p);
        let mut q = 1;
        while q <= (d - c).next_power_of_two() {
            let cols = dyadic_cuts(c, d, q);
            let mut outer = 0.0;
            for cw in cols.windows(2) {
                let inner: f64 = rows.windows(2).map(|rw| g.rect(rw[0], rw[1], cw[0], cw[1]).abs().powf(gamma)).sum();
                outer += inner.powf(rho / gamma);
            }
            out = out.max(outer.powf(1.0 / rho));
            q *= 2;
        }
        p *= 2;
    }
    out
}

fn validate(gamma: f64, rho: f64) -> Result<()> {
    if !(gamma >= 1.0 && rho >= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma and rho must be >= 1, got {gamma}, {rho}")));
    }
    Ok(())
}

fn on_grid(k: &CovKernel, rect: &Rect, gamma: f64, rho: f64, grid: &TimeGrid) -> Result<f64> {
    let (a, b) = (grid.index_of(rect.s)?, grid.index_of(rect.t)?);
    let (c, d) = (grid.index_of(rect.u)?, grid.index_of(rect.v)?);
    let g = k.gram(grid)?;
    Ok(mixed_on_gram(&g, (a, b), (c, d), gamma, rho))
}

/// Mixed (gamma, rho)-variation over sub-grid dissections of `rect`.
pub fn mixed_variation(k: &CovKernel, rect: Rect, gamma: f64, rho: f64, grid: &TimeGrid) -> Result<Variation> {
    validate(gamma, rho)?;
    if rect.s > rect.t || rect.u > rect.v {
        return Err(Error::InvalidParameter("rectangle sides must be ordered".into()));
    }
    if rect.s == rect.t || rect.u == rect.v {
        return Ok(Variation { value: 0.0, coarse: Some(0.0) });
    }
    let value = on_grid(k, &rect, gamma, rho, grid)?;
    let coarse = match grid.coarsen() {
        Some(cg) => on_grid(k, &rect, gamma, rho, &cg).ok(),
        None => None,
    };
    Ok(Variation { value, coarse })
}

/// `kappa_{s,t} = V_{1,rho}(R; [s,t]^2)^{1/2}` with the kernel's declared rho.
pub fn kappa(k: &CovKernel, s: f64, t: f64, grid: &TimeGrid) -> Result<f64> {
    Ok(mixed_variation(k, Rect::square(s, t), 1.0, k.rho(), grid)?.value.sqrt())
}

/// `eta_t = kappa_t^2 / sigma_t^2`.
pub fn eta(k: &CovKernel, t: f64, grid: &TimeGrid) -> Result<f64> {
    let var = k.sigma_sq0(t)?;
    if !(var > 0.0) {
        return Err(Error::DegenerateTime(t));
    }
    Ok(kappa(k, 0.0, t, grid)?.powi(2) / var)
}
