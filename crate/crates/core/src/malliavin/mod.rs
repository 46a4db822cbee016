//! Malliavin derivatives and matrices of RDE solutions and skeletons.

mod audit;

pub use audit::{interpolation_audit, inverse_moment_scaling, InterpolationAudit, InterpolationDraw, InverseMomentScaling};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovKernel, Gram};
use crate::error::{Error, Result};
use crate::gaussian_path::CMElement;
use crate::grid::TimeGrid;
use crate::rde::{self, FlowState, SolveOptions, VectorField};
use crate::rough_lift::RoughPath2;

/// `D_s Z_t = J_t Jinv_s V(Z_s)` on the nodes `s <= t`.
#[derive(Clone, Debug)]
pub struct MalliavinKernelTrace {
    grid: TimeGrid,
    t_node: usize,
    n: usize,
    d: usize,
    values: Vec<f64>,
    flow: String,
}

impl MalliavinKernelTrace {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn t_node(&self) -> usize {
        self.t_node
    }

    pub fn flow_id(&self) -> &str {
        &self.flow
    }

    /// Row-major `n x d` matrix at node `s`.
    pub fn at(&self, s: usize) -> &[f64] {
        let nd = self.n * self.d;
        &self.values[s * nd..(s + 1) * nd]
    }

    /// Pairing with the step function `g` (cell-major, `d` values per cell) in H,
    /// using the trapezoid average of the kernel over each cell.
    pub fn pair_step(&self, q: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
        let (n, d, t) = (self.n, self.d, self.t_node);
        let cells = q.nrows();
        let mut out = vec![0.0; n];
        let mut qg = vec![0.0; d];
        for i in 0..t {
            qg.fill(0.0);
            for j in 0..cells {
                let qij = q[(i, j)];
                for c in 0..d {
                    qg[c] += qij * g[j * d + c];
                }
            }
            let (a, b) = (self.at(i), self.at(i + 1));
            for r in 0..n {
                for c in 0..d {
                    out[r] += 0.5 * (a[r * d + c] + b[r * d + c]) * qg[c];
                }
            }
        }
        out
    }
}

/// Builds the derivative kernel from a flow solved with its Jacobian.
pub fn derivative_kernel(flow: &FlowState, vf: &dyn VectorField, t_node: usize) -> Result<MalliavinKernelTrace> {
    if !flow.has_jacobian() {
        return Err(Error::InvalidParameter("flow was solved without its Jacobian".into()));
    }
    if t_node > flow.grid().n() {
        return Err(Error::NodeNotOnGrid(t_node as f64));
    }
    let (n, d) = (flow.state_dim(), vf.driver_dim());
    let jt = flow.j_matrix(t_node);
    let mut v = vec![0.0; n * d];
    let mut values = vec![0.0; (t_node + 1) * n * d];
    for s in 0..=t_node {
        vf.diffusion(flow.z(s), &mut v);
        let out = &mut values[s * n * d..(s + 1) * n * d];
        if s == t_node {
            out.copy_from_slice(&v);
            continue;
        }
        let m = &jt * flow.jinv_matrix(s) * DMatrix::from_row_slice(n, d, &v);
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] = m[(r, c)];
            }
        }
    }
    Ok(MalliavinKernelTrace { grid: flow.grid().clone(), t_node, n, d, values, flow: flow.driver().to_string() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalliavinMatrix {
    pub n: usize,
    /// Row-major.
    pub gamma: Vec<f64>,
    pub t: f64,
    pub t_node: usize,
    pub grid_n: usize,
    pub kernel: String,
}

impl MalliavinMatrix {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.gamma)
    }

    pub fn asymmetry(&self) -> f64 {
        let g = self.matrix();
        (&g - g.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let g = self.matrix();
        let sym = (&g + g.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.gamma[i * self.n + i]).sum()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    /// Symmetric and PSD up to `1e-10 * trace`.
    pub fn is_psd(&self) -> bool {
        let scale = self.trace().abs().max(f64::MIN_POSITIVE);
        self.asymmetry() <= 1e-10 * scale && self.min_eigenvalue() >= -1e-10 * scale
    }
}

/// `gamma_t = J_t C_t J_t^T` with `C_t = sum_{i,j < t} Jinv_i V(Z_i) V(Z_j)^T Jinv_j^T Q_ij`.
pub fn malliavin_matrix(flow: &FlowState, vf: &dyn VectorField, gram: &Gram, t_node: usize) -> Result<MalliavinMatrix> {
    if gram.grid() != flow.grid() {
        return Err(Error::KernelMismatch);
    }
    let q = gram.cell_cov();
    malliavin_matrix_with(flow, vf, &q, t_node, &gram_id(gram))
}

fn gram_id(gram: &Gram) -> String {
    format!("gram(N={})", gram.grid().n())
}

/// Assembly against a precomputed cell covariance `q`; sequential and deterministic.
pub fn malliavin_matrix_with(flow: &FlowState, vf: &dyn VectorField, q: &DMatrix<f64>, t_node: usize, kernel: &str) -> Result<MalliavinMatrix> {
    if !flow.has_jacobian() {
        return Err(Error::InvalidParameter("flow was solved without its Jacobian".into()));
    }
    if t_node > flow.grid().n() || q.nrows() != flow.grid().n() {
        return Err(Error::DimensionMismatch(format!("t_node {t_node}, cell covariance {}", q.nrows())));
    }
    let (n, d) = (flow.state_dim(), vf.driver_dim());
    let nd = n * d;
    // M_i = Jinv_i V(Z_i), row-major n x d.
    let mut m = vec![0.0; t_node * nd];
    let mut v = vec![0.0; nd];
    for i in 0..t_node {
        vf.diffusion(flow.z(i), &mut v);
        let jinv = flow.jinv(i);
        for r in 0..n {
            for c in 0..d {
                let mut s = 0.0;
                for k in 0..n {
                    s += jinv[r * n + k] * v[k * d + c];
                }
                m[i * nd + r * d + c] = s;
            }
        }
    }
    // C = sum_i M_i (sum_j Q_ij M_j)^T
    let mut c = vec![0.0; n * n];
    let mut qm = vec![0.0; nd];
    for i in 0..t_node {
        qm.fill(0.0);
        for j in 0..t_node {
            let qij = q[(i, j)];
            if qij == 0.0 {
                continue;
            }
            for k in 0..nd {
                qm[k] += qij * m[j * nd + k];
            }
        }
        for r in 0..n {
            for s in 0..n {
                let mut acc = 0.0;
                for col in 0..d {
                    acc += m[i * nd + r * d + col] * qm[s * d + col];
                }
                c[r * n + s] += acc;
            }
        }
    }
    let jt = flow.j_matrix(t_node);
    let g = &jt * DMatrix::from_row_slice(n, n, &c) * jt.transpose();
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateMalliavin(f64::NAN));
    }
    let mut gamma = vec![0.0; n * n];
    for r in 0..n {
        for s in 0..n {
            gamma[r * n + s] = g[(r, s)];
        }
    }
    Ok(MalliavinMatrix { n, gamma, t: flow.grid().nodes()[t_node], t_node, grid_n: flow.grid().n(), kernel: kernel.to_string() })
}

/// Malliavin matrix of the skeleton `Phi_T(h)` on `grid`.
pub fn deterministic_malliavin_matrix(h: &CMElement, vf: &dyn VectorField, z0: &[f64], gram: &Gram) -> Result<MalliavinMatrix> {
    let flow = rde::solve_skeleton(h, gram.grid(), vf, z0)?;
    let mut m = malliavin_matrix(&flow, vf, gram, gram.grid().n())?;
    m.kernel = h.kernel().id();
    Ok(m)
}

/// Cell values of the H-representative of `h = sum_a c_a R(s_a, .)`, namely
/// `sum_a c_a 1_[0, s_a]`. Atoms must sit on grid nodes.
pub fn step_representative(h: &CMElement, grid: &TimeGrid) -> Result<Vec<f64>> {
    let d = h.dim();
    let mut g = vec![0.0; grid.n() * d];
    for (a, &s) in h.nodes().iter().enumerate() {
        let idx = grid.index_of(s)?;
        for cell in 0..idx {
            for c in 0..d {
                g[cell * d + c] += h.coeffs()[c][a];
            }
        }
    }
    Ok(g)
}

/// Central difference of `Z_t` along the driver perturbation `x + tau * h`.
pub fn pathwise_derivative(grid: &TimeGrid, path: &[f64], vf: &dyn VectorField, z0: &[f64], eps: f64, h: &CMElement, tau: f64, t_node: usize) -> Result<Vec<f64>> {
    let d = vf.driver_dim();
    let trace = h.trace(grid)?;
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let p: Vec<f64> = path.iter().zip(&trace).map(|(x, y)| x + sign * tau * y).collect();
        let rp = RoughPath2::lift(grid, d, &p)?;
        let flow = rde::solve_with(&rp, vf, z0, eps, SolveOptions { jacobian: false, ..Default::default() })?;
        Ok(flow.z(t_node).to_vec())
    };
    let (p, m) = (shifted(1.0)?, shifted(-1.0)?);
    Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * tau)).collect())
}

/// `eps <D Z_t, h>` through the kernel pairing; the counterpart of [`pathwise_derivative`].
pub fn kernel_directional_derivative(flow: &FlowState, vf: &dyn VectorField, gram: &Gram, h: &CMElement, t_node: usize) -> Result<Vec<f64>> {
    let kt = derivative_kernel(flow, vf, t_node)?;
    let g = step_representative(h, gram.grid())?;
    let eps = flow.eps();
    Ok(kt.pair_step(&gram.cell_cov(), &g).into_iter().map(|x| eps * x).collect())
}

/// H-norm of `D Z_t`, summed over state components.
pub fn derivative_h_norm(trace: &MalliavinKernelTrace, q: &DMatrix<f64>) -> f64 {
    let (n, d, t) = (trace.n, trace.d, trace.t_node);
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..d {
            for i in 0..t {
                for j in 0..t {
                    total += trace.at(i)[r * d + c] * trace.at(j)[r * d + c] * q[(i, j)];
                }
            }
        }
    }
    total.max(0.0).sqrt()
}

/// Kernel used by a flow's driver, for callers assembling many paths.
pub fn cell_covariance(k: &CovKernel, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    Ok(k.gram(grid)?.cell_cov())
}
