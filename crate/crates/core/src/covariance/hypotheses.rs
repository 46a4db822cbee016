//! Grid verification of the sign conditions on covariance increments, of the
//! non-determinism index, and of Hölder-controlled mixed variation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::variation::mixed_on_gram;
use super::{CovKernel, Gram};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{cholesky_jitter, linear_fit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub pass: bool,
    /// Largest violation, signed so that positive values violate the condition.
    pub worst_violation: f64,
    pub witness: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub pass: bool,
    pub exponent: f64,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub kernel: String,
    pub n: usize,
    pub tolerance: f64,
    pub negative_correlation: SignCheck,
    pub diagonal_dominance: SignCheck,
    pub c_x_estimate: f64,
    pub alpha_estimate: f64,
    pub holder_controlled: HolderCheck,
    /// Largest node on which the stationary profile is non-decreasing and concave.
    pub valid_horizon: Option<f64>,
    pub pass: bool,
}

type Best = (f64, [usize; 4]);

fn better(a: Best, b: Best) -> Best {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Worst value of `score` over `t1 < t2 <= t3 < t4` (strict = true) or
/// `t1 <= t2 < t3 <= t4` (strict = false), lexicographically smallest witness on ties.
fn scan<F>(n: usize, strict: bool, score: F) -> Best
where
    F: Fn(usize, usize, usize, usize) -> f64 + Sync,
{
    let none: Best = (f64::NEG_INFINITY, [usize::MAX; 4]);
    (0..=n)
        .into_par_iter()
        .map(|a| {
            let mut best = none;
            let b0 = if strict { a + 1 } else { a };
            for b in b0..=n {
                let c0 = if strict { b } else { b + 1 };
                for c in c0..=n {
                    let d0 = if strict { c + 1 } else { c };
                    for d in d0..=n {
                        let v = score(a, b, c, d);
                        if v > best.0 {
                            best = (v, [a, b, c, d]);
                        }
                    }
                }
            }
            best
        })
        .reduce(|| none, better)
}

fn sign_check(best: Best, tol: f64, nodes: &[f64]) -> SignCheck {
    let witness = (best.1[0] != usize::MAX).then(|| best.1.map(|i| nodes[i]));
    let worst = if best.0.is_finite() { best.0 } else { 0.0 };
    SignCheck { pass: worst <= tol, worst_violation: worst, witness }
}

/// `Var(X_t - X_s | grid increments outside [s, t])` for every pair of nodes `a < b`,
/// returned as `(a, b, variance)`.
pub(crate) fn conditional_variances(g: &Gram) -> Result<Vec<(usize, usize, f64)>> {
    let n = g.grid().n();
    let (l, _) = cholesky_jitter(&g.cell_cov()).map_err(|_| {
        Error::NotPositiveDefinite { jitter: 1e-8 }
    })?;
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite { jitter: 1e-8 })?;
    let prec = linv.transpose() * &linv;
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            // Incremental Cholesky of the precision block on cells a..b, and of L^{-1} 1.
            let size = n - a;
            let mut lf = vec![0.0; size * size];
            let mut y: Vec<f64> = Vec::with_capacity(size);
            let mut ysq = 0.0;
            let mut out = Vec::with_capacity(size);
            for j in 0..size {
                let mut diag = prec[(a + j, a + j)];
                for k in 0..j {
                    let mut v = prec[(a + j, a + k)];
                    for m in 0..k {
                        v -= lf[j * size + m] * lf[k * size + m];
                    }
                    v /= lf[k * size + k];
                    lf[j * size + k] = v;
                    diag -= v * v;
                }
                let ljj = diag.max(f64::MIN_POSITIVE).sqrt();
                lf[j * size + j] = ljj;
                let mut rhs = 1.0;
                for k in 0..j {
                    rhs -= lf[j * size + k] * y[k];
                }
                let yj = rhs / ljj;
                y.push(yj);
                ysq += yj * yj;
                out.push((a, a + j + 1, ysq));
            }
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Least-squares exponent on lengths in `[4 mesh, T/4]`, and `c_X = inf var / len^alpha`.
pub(crate) fn nondeterminism(grid: &TimeGrid, cv: &[(usize, usize, f64)]) -> (f64, f64) {
    let nodes = grid.nodes();
    let (lo, hi) = (4.0 * grid.mesh() * (1.0 - 1e-9), grid.horizon() / 4.0 * (1.0 + 1e-9));
    let collect = |lo: f64, hi: f64| {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &(a, b, v) in cv {
            let len = nodes[b] - nodes[a];
            if len >= lo && len <= hi && v > 0.0 {
                xs.push(len.ln());
                ys.push(v.ln());
            }
        }
        (xs, ys)
    };
    let (mut xs, mut ys) = collect(lo, hi);
    if xs.iter().all(|x| (x - xs[0]).abs() < 1e-12) {
        // Coarse grids leave fewer than two lengths in the window.
        (xs, ys) = collect(0.0, f64::INFINITY);
    }
    let alpha = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { f64::NAN };
    let c_x = cv
        .iter()
        .map(|&(a, b, v)| v / (nodes[b] - nodes[a]).powf(alpha))
        .fold(f64::INFINITY, f64::min);
    (alpha, c_x)
}

fn holder_check(g: &Gram, rho: f64) -> HolderCheck {
    let grid = g.grid();
    let n = grid.n();
    let nodes = grid.nodes();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut constant = 0.0f64;
    let mut cells = 1;
    while cells <= (n / 2).max(1) {
        let mut worst = 0.0f64;
        let mut a = 0;
        while a + cells <= n {
            let v = mixed_on_gram(g, (a, a + cells), (a, a + cells), 1.0, rho);
            let len = nodes[a + cells] - nodes[a];
            worst = worst.max(v);
            constant = constant.max(v / len.powf(1.0 / rho));
            a += cells;
        }
        xs.push((nodes[cells] - nodes[0]).ln());
        ys.push(worst.ln());
        cells *= 2;
    }
    let exponent = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { f64::NAN };
    HolderCheck { pass: exponent >= 1.0 / rho - 0.1, exponent, constant }
}

fn valid_horizon(k: &CovKernel, grid: &TimeGrid) -> Result<Option<f64>> {
    if !k.is_stationary() {
        return Ok(None);
    }
    let nodes = grid.nodes();
    let f: Vec<f64> = nodes.iter().map(|&t| k.profile(t)).collect::<Result<_>>()?;
    let tol = (1e-12 * f.iter().fold(0.0f64, |m, v| m.max(v.abs()))).max(k.truncation_error().unwrap_or(0.0));
    let mut last = 1;
    for i in 2..nodes.len() {
        let slope_prev = (f[i - 1] - f[i - 2]) / (nodes[i - 1] - nodes[i - 2]);
        let slope = (f[i] - f[i - 1]) / (nodes[i] - nodes[i - 1]);
        if f[i] + tol < f[i - 1] || slope > slope_prev + tol / grid.mesh() {
            break;
        }
        last = i;
    }
    Ok(Some(nodes[last]))
}

/// Runs every grid check for `k` on `grid`. `tol` defaults to `1e-10 * sigma_T^2`.
pub fn check_hypotheses(k: &CovKernel, grid: &TimeGrid, tol: Option<f64>) -> Result<HypothesisReport> {
    if grid.n() < 4 {
        return Err(Error::InvalidParameter("hypothesis checks need N >= 4".into()));
    }
    let g = k.gram(grid)?;
    let n = grid.n();
    let tol = tol.unwrap_or(1e-10 * g.matrix()[(n, n)].abs());
    let nodes = grid.nodes();

    let neg = scan(n, true, |a, b, c, d| g.rect(a, b, c, d));
    let dom = scan(n, false, |a, b, c, d| -g.rect(b, c, a, d));
    let negative_correlation = sign_check(neg, tol, nodes);
    let diagonal_dominance = sign_check(dom, tol, nodes);

    let cv = conditional_variances(&g)?;
    let (alpha_estimate, c_x_estimate) = nondeterminism(grid, &cv);
    let holder_controlled = holder_check(&g, k.rho());
    let valid_horizon = valid_horizon(k, grid)?;

    let pass = negative_correlation.pass
        && diagonal_dominance.pass
        && c_x_estimate > 0.0
        && alpha_estimate.is_finite()
        && holder_controlled.pass;
    Ok(HypothesisReport {
        kernel: k.id(),
        n,
        tolerance: tol,
        negative_correlation,
        diagonal_dominance,
        c_x_estimate,
        alpha_estimate,
        holder_controlled,
        valid_horizon,
        pass,
    })
}
