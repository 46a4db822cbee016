//! Variational rate function `d^2(y) = inf { |h|_H^2 / 2 : Phi_1(h) = y }`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{bfgs, BfgsOptions};
use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::gaussian_path::CMElement;
use crate::grid::TimeGrid;
use crate::linalg::cholesky_jitter;
use crate::malliavin::deterministic_malliavin_matrix;
use crate::rde::{self, ellipticity_scan, VectorField, SKELETON_REFINE};
use crate::rng;

/// Cameron-Martin elements `h = sum_a c_a R(s_a, .)` on equispaced atoms, in
/// whitened coordinates `b = L^T c` with `L L^T = (R(s_a, s_b))`, so `|h|_H = |b|`.
#[derive(Clone, Debug)]
pub struct SkeletonBasis {
    kernel: CovKernel,
    grid: TimeGrid,
    fine: TimeGrid,
    d: usize,
    atoms: Vec<f64>,
    chol: DMatrix<f64>,
    /// `basis[(node, a)] = R(s_a, t_node)` on the fine grid.
    basis: DMatrix<f64>,
}

impl SkeletonBasis {
    pub fn new(k: &CovKernel, grid: &TimeGrid, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter("need at least one atom and one component".into()));
        }
        let horizon = grid.horizon();
        let atoms: Vec<f64> = (1..=m).map(|a| horizon * a as f64 / m as f64).collect();
        let mut rm = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let v = k.eval(atoms[a], atoms[b])?;
                rm[(a, b)] = v;
                rm[(b, a)] = v;
            }
        }
        let (chol, _) = cholesky_jitter(&rm)?;
        let fine = grid.refine_by(SKELETON_REFINE);
        let mut basis = DMatrix::zeros(fine.n() + 1, m);
        for (i, &t) in fine.nodes().iter().enumerate() {
            for a in 0..m {
                basis[(i, a)] = k.eval(atoms[a], t)?;
            }
        }
        Ok(Self { kernel: k.clone(), grid: grid.clone(), fine, d, atoms, chol, basis })
    }

    pub fn dim(&self) -> usize {
        self.atoms.len() * self.d
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Atom coefficients per component from whitened coordinates.
    pub fn coefficients(&self, b: &[f64]) -> Vec<Vec<f64>> {
        let m = self.atoms.len();
        let lt = self.chol.transpose();
        (0..self.d)
            .map(|c| {
                let rhs = DVector::from_column_slice(&b[c * m..(c + 1) * m]);
                lt.solve_upper_triangular(&rhs).expect("nonsingular factor").as_slice().to_vec()
            })
            .collect()
    }

    pub fn element(&self, b: &[f64]) -> Result<CMElement> {
        CMElement::new(&self.kernel, self.atoms.clone(), self.coefficients(b))
    }

    /// Node-major trace of `h(b)` on the fine grid.
    pub fn drive(&self, b: &[f64]) -> Vec<f64> {
        let coeffs = self.coefficients(b);
        let rows = self.basis.nrows();
        let mut out = vec![0.0; rows * self.d];
        for (c, cc) in coeffs.iter().enumerate() {
            let v = &self.basis * DVector::from_column_slice(cc);
            for i in 0..rows {
                out[i * self.d + c] = v[i];
            }
        }
        out
    }

    /// `Phi_T(h(b))`.
    pub fn endpoint(&self, vf: &dyn VectorField, z0: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let flow = rde::solve_drive(&self.fine, &self.drive(b), vf, z0, false)?;
        Ok(flow.terminal().to_vec())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub m_nodes: usize,
    pub penalties: Vec<f64>,
    pub tol: f64,
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of the random starting points in whitened coordinates.
    pub start_scale: f64,
    pub max_iter: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self { m_nodes: 16, penalties: vec![1e2, 1e3, 1e4, 1e5], tol: 1e-6, starts: 5, seed: 0, start_scale: 0.5, max_iter: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStage {
    /// Penalty weight; `None` marks the constrained Gauss-Newton polish.
    pub mu: Option<f64>,
    pub d2: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub d2: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionResult {
    pub y: Vec<f64>,
    pub d2: f64,
    pub atoms: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub whitened: Vec<f64>,
    pub residual: f64,
    pub penalty_trace: Vec<PenaltyStage>,
    pub det_gamma: f64,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn half_sq(b: &[f64]) -> f64 {
    0.5 * b.iter().map(|x| x * x).sum::<f64>()
}

struct Run {
    b: Vec<f64>,
    residual: f64,
    trace: Vec<PenaltyStage>,
}

/// Minimum-norm Newton steps on the constraint: `b <- A^T (A A^T)^{-1} (y - Phi(b) + A b)`.
/// Fixed points satisfy `Phi(b) = y` and `b = A^T lambda`.
fn polish(basis: &SkeletonBasis, vf: &dyn VectorField, z0: &[f64], y: &[f64], b0: &[f64], tol: f64) -> (Vec<f64>, f64, usize) {
    let n = y.len();
    let dim = b0.len();
    let phi = |b: &[f64]| basis.endpoint(vf, z0, b).ok();
    let mut b = b0.to_vec();
    let Some(mut cur) = phi(&b) else { return (b, f64::INFINITY, 0) };
    let mut res = dist(&cur, y);
    let mut it = 0;
    while it < 30 {
        it += 1;
        let mut a = DMatrix::zeros(n, dim);
        let mut xs = b.clone();
        for i in 0..dim {
            let h = 1e-5 * (1.0 + b[i].abs());
            xs[i] = b[i] + h;
            let Some(p) = phi(&xs) else { return (b, res, it) };
            xs[i] = b[i] - h;
            let Some(m) = phi(&xs) else { return (b, res, it) };
            xs[i] = b[i];
            for r in 0..n {
                a[(r, i)] = (p[r] - m[r]) / (2.0 * h);
            }
        }
        let bv = DVector::from_column_slice(&b);
        let rhs = DVector::from_iterator(n, (0..n).map(|r| y[r] - cur[r])) + &a * &bv;
        let Some(inv) = (&a * a.transpose()).try_inverse() else { break };
        let target = a.transpose() * (inv * rhs);
        // Damped step: halve until the residual does not grow past the tolerance.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = b.iter().zip(target.iter()).map(|(x, t)| x + step * (t - x)).collect();
            if let Some(p) = phi(&trial) {
                let r = dist(&p, y);
                if r <= res.max(tol) {
                    let moved = dist(&trial, &b);
                    b = trial;
                    cur = p;
                    res = r;
                    accepted = true;
                    if moved <= 1e-12 * (1.0 + half_sq(&b).sqrt()) && res <= tol {
                        return (b, res, it);
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (b, res, it)
}

fn run_start(basis: &SkeletonBasis, vf: &dyn VectorField, z0: &[f64], y: &[f64], start: Vec<f64>, cfg: &RateConfig) -> Run {
    let mut b = start;
    let mut trace = Vec::new();
    let opts = BfgsOptions { max_iter: cfg.max_iter, ..Default::default() };
    let residual_of = |b: &[f64]| basis.endpoint(vf, z0, b).map(|p| dist(&p, y)).unwrap_or(f64::INFINITY);
    for &mu in &cfg.penalties {
        let r = bfgs(
            |x| match basis.endpoint(vf, z0, x) {
                Ok(p) => half_sq(x) + mu * dist(&p, y).powi(2),
                Err(_) => f64::INFINITY,
            },
            &b,
            opts,
        );
        b = r.x;
        trace.push(PenaltyStage { mu: Some(mu), d2: half_sq(&b), residual: residual_of(&b), iterations: r.iterations });
    }
    let (pb, res, it) = polish(basis, vf, z0, y, &b, cfg.tol);
    let before = residual_of(&b);
    if res <= before || res <= cfg.tol {
        b = pb;
    }
    let residual = residual_of(&b);
    trace.push(PenaltyStage { mu: None, d2: half_sq(&b), residual, iterations: it });
    Run { b, residual, trace }
}

/// Penalized multi-start minimization of `|h|^2 / 2 + mu |Phi_1(h) - y|^2`
/// followed by a constrained polish. The best start is chosen by `(d2, index)`
/// among those meeting the residual tolerance.
pub fn rate_function(y: &[f64], k: &CovKernel, vf: &dyn VectorField, z0: &[f64], grid: &TimeGrid, cfg: &RateConfig) -> Result<RateFunctionResult> {
    if y.len() != vf.state_dim() || z0.len() != vf.state_dim() {
        return Err(Error::DimensionMismatch("target, z0 and state dimension differ".into()));
    }
    let ell = ellipticity_scan(vf, z0, 1000, cfg.seed)?;
    if !ell.elliptic {
        return Err(Error::NotElliptic(ell.lambda_hat));
    }
    let basis = SkeletonBasis::new(k, grid, cfg.m_nodes, vf.driver_dim())?;
    let dim = basis.dim();
    let runs: Vec<Run> = (0..cfg.starts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut start = vec![0.0; dim];
            if i > 0 {
                let mut r = rng::stream(cfg.seed, i as u64, 0);
                rng::fill_normal(&mut r, &mut start);
                start.iter_mut().for_each(|x| *x *= cfg.start_scale);
            }
            run_start(&basis, vf, z0, y, start, cfg)
        })
        .collect();
    let starts: Vec<StartSummary> = runs.iter().enumerate().map(|(i, r)| StartSummary { index: i, d2: half_sq(&r.b), residual: r.residual }).collect();
    let best = starts
        .iter()
        .filter(|s| s.residual <= cfg.tol)
        .min_by(|a, b| a.d2.total_cmp(&b.d2).then(a.index.cmp(&b.index)))
        .map(|s| s.index);
    let Some(best) = best else {
        let residual = starts.iter().map(|s| s.residual).fold(f64::INFINITY, f64::min);
        return Err(Error::ResidualNotMet { residual, tol: cfg.tol });
    };
    let run = &runs[best];
    let h = basis.element(&run.b)?;
    let gram = k.gram(grid)?;
    let gamma = deterministic_malliavin_matrix(&h, vf, z0, &gram)?;
    let det_gamma = gamma.determinant();
    if !(det_gamma > 0.0) {
        return Err(Error::DegenerateMalliavin(det_gamma));
    }
    Ok(RateFunctionResult {
        y: y.to_vec(),
        d2: half_sq(&run.b),
        atoms: basis.atoms().to_vec(),
        coefficients: h.coeffs().to_vec(),
        whitened: run.b.clone(),
        residual: run.residual,
        penalty_trace: run.trace.clone(),
        det_gamma,
        best_start: best,
        starts,
    })
}
