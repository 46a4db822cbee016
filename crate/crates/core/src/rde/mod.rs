//! Rough differential equations, their Jacobian flows and Cameron-Martin skeletons.

mod ellipticity;
mod fields;
mod stepper;

pub use ellipticity::{ellipticity_scan, ellipticity_scan_box, min_gram_eigenvalue, EllipticityReport, ELLIPTIC_FLOOR};
pub use fields::{BoundedNonlinear, Identity, RotationMix, ScalarLinear, VectorField, VfSpec};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_path::CMElement;
use crate::grid::TimeGrid;
use crate::rough_lift::RoughPath2;
use stepper::Stepper;

/// Threshold on `|Z|` past which a solve is abandoned.
pub const BLOW_UP: f64 = 1e8;
/// Jinv is re-inverted from J at least this often.
pub const REINVERT_EVERY: usize = 64;
/// Jinv is also re-inverted whenever `max |J Jinv - I|` exceeds this.
pub const REINVERT_DEFECT: f64 = 1e-10;
/// Refinement factor of the skeleton drive.
pub const SKELETON_REFINE: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact flow of the level-2 log-signature field, integrated by one RK4 step.
    #[default]
    LogOde,
    /// One-step second-order Taylor expansion.
    Taylor2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub scheme: Scheme,
    pub jacobian: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { scheme: Scheme::LogOde, jacobian: true }
    }
}

/// Solution of an RDE on a grid with optional Jacobian and inverse Jacobian.
#[derive(Clone, Debug)]
pub struct FlowState {
    grid: TimeGrid,
    n: usize,
    z: Vec<f64>,
    j: Vec<f64>,
    jinv: Vec<f64>,
    z0: Vec<f64>,
    eps: f64,
    driver: String,
}

impl FlowState {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn driver(&self) -> &str {
        &self.driver
    }

    pub fn has_jacobian(&self) -> bool {
        !self.j.is_empty()
    }

    pub fn z(&self, node: usize) -> &[f64] {
        &self.z[node * self.n..(node + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.z(self.grid.n())
    }

    /// Row-major `n x n` Jacobian at a node. Panics if the Jacobian was not computed.
    pub fn j(&self, node: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.j[node * nn..(node + 1) * nn]
    }

    pub fn jinv(&self, node: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.jinv[node * nn..(node + 1) * nn]
    }

    pub fn j_matrix(&self, node: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, self.j(node))
    }

    pub fn jinv_matrix(&self, node: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, self.jinv(node))
    }

    /// `J_{s,t} = J_t J_s^{-1}`.
    pub fn two_point_jacobian(&self, s: usize, t: usize) -> DMatrix<f64> {
        self.j_matrix(t) * self.jinv_matrix(s)
    }

    /// `max_node max_entry |J Jinv - I|`.
    pub fn inverse_defect(&self) -> f64 {
        (0..=self.grid.n()).map(|i| stepper::defect(self.n, self.j(i), self.jinv(i))).fold(0.0, f64::max)
    }

    /// Running maximum of `|Z_s - z0|` along the grid.
    pub fn sup_deviation(&self) -> f64 {
        (0..=self.grid.n())
            .map(|i| self.z(i).iter().zip(&self.z0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn check_dims(vf: &dyn VectorField, d: usize, z0: &[f64]) -> Result<()> {
    if vf.driver_dim() != d {
        return Err(Error::DimensionMismatch(format!("{} expects a {}-dimensional driver, got {d}", vf.name(), vf.driver_dim())));
    }
    if vf.state_dim() != z0.len() {
        return Err(Error::DimensionMismatch(format!("{} has state dimension {}, z0 has {}", vf.name(), vf.state_dim(), z0.len())));
    }
    if z0.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidParameter("z0 must be finite".into()));
    }
    Ok(())
}

/// Solves `dZ = V_0(Z) dt + eps V(Z) dX` with Jacobian, using the default scheme.
///
/// The driver is the dilation `rp.scaled(eps)`, so `solve(rp, .., eps)` and
/// `solve(&rp.scaled(eps), .., 1.0)` agree bitwise.
pub fn solve(rp: &RoughPath2, vf: &dyn VectorField, z0: &[f64], eps: f64) -> Result<FlowState> {
    solve_with(rp, vf, z0, eps, SolveOptions::default())
}

pub fn solve_with(rp: &RoughPath2, vf: &dyn VectorField, z0: &[f64], eps: f64, opts: SolveOptions) -> Result<FlowState> {
    check_dims(vf, rp.dim(), z0)?;
    if !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps = {eps}")));
    }
    let scaled;
    let rp = if eps == 1.0 {
        rp
    } else {
        scaled = rp.scaled(eps);
        &scaled
    };
    let grid = rp.grid();
    let (n, steps) = (vf.state_dim(), grid.n());
    let nn = n * n;
    let mut z = Vec::with_capacity((steps + 1) * n);
    z.extend_from_slice(z0);
    let (mut j, mut jinv) = if opts.jacobian {
        let mut j = vec![0.0; (steps + 1) * nn];
        for i in 0..n {
            j[i * n + i] = 1.0;
        }
        (j.clone(), j)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut st = Stepper::new(vf, opts.scheme, opts.jacobian);
    let mut cur = z0.to_vec();
    for i in 0..steps {
        let dx = rp.step1(i);
        let size = dx.iter().map(|x| x * x).sum::<f64>().sqrt();
        if size >= 1.0 {
            return Err(Error::StepTooCoarse { step: i, size });
        }
        if opts.jacobian {
            let (jh, jt) = j.split_at_mut((i + 1) * nn);
            let (ih, it) = jinv.split_at_mut((i + 1) * nn);
            jt[..nn].copy_from_slice(&jh[i * nn..]);
            it[..nn].copy_from_slice(&ih[i * nn..]);
            st.step(&mut cur, Some((&mut jt[..nn], &mut it[..nn])), grid.dt(i), dx, rp.step2(i));
            if (i + 1) % REINVERT_EVERY == 0 || stepper::defect(n, &jt[..nn], &it[..nn]) > REINVERT_DEFECT {
                stepper::reinvert(n, &jt[..nn], &mut it[..nn]);
            }
        } else {
            st.step(&mut cur, None, grid.dt(i), dx, rp.step2(i));
        }
        let norm = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= BLOW_UP) {
            return Err(Error::BlowUp { last_valid: i, norm });
        }
        z.extend_from_slice(&cur);
    }
    Ok(FlowState { grid: grid.clone(), n, z, j, jinv, z0: z0.to_vec(), eps, driver: String::from("rough_path") })
}

/// Terminal value only; no allocation beyond the stepper.
pub fn solve_terminal(rp: &RoughPath2, vf: &dyn VectorField, z0: &[f64], eps: f64, scheme: Scheme) -> Result<Vec<f64>> {
    let flow = solve_with(rp, vf, z0, eps, SolveOptions { scheme, jacobian: false })?;
    Ok(flow.terminal().to_vec())
}

/// Solves the driver-to-state ODE for a node-major, piecewise-linear drive on `grid`
/// with RK4 per step. Used for skeletons and for deterministic drives.
pub fn solve_drive(grid: &TimeGrid, drive: &[f64], vf: &dyn VectorField, z0: &[f64], jacobian: bool) -> Result<FlowState> {
    let d = vf.driver_dim();
    if drive.len() != (grid.n() + 1) * d {
        return Err(Error::DimensionMismatch(format!("drive has {} values, grid needs {} x {d}", drive.len(), grid.n() + 1)));
    }
    let rp = RoughPath2::lift(grid, d, drive)?;
    let mut flow = solve_with(&rp, vf, z0, 1.0, SolveOptions { scheme: Scheme::LogOde, jacobian })?;
    flow.driver = String::from("drive");
    Ok(flow)
}

/// Skeleton `dPhi = V_0(Phi) dt + V(Phi) dh` for a Cameron-Martin element `h`.
///
/// The drive is the exact trace of `h` on `grid` refined `SKELETON_REFINE` times,
/// interpolated linearly; the returned flow is restricted to the nodes of `grid`.
pub fn solve_skeleton(h: &CMElement, grid: &TimeGrid, vf: &dyn VectorField, z0: &[f64]) -> Result<FlowState> {
    let fine = grid.refine_by(SKELETON_REFINE);
    let trace = h.trace(&fine)?;
    let flow = solve_drive(&fine, &trace, vf, z0, true)?;
    Ok(restrict(&flow, grid, SKELETON_REFINE))
}

/// Keeps every `stride`-th node of a flow.
pub fn restrict(flow: &FlowState, coarse: &TimeGrid, stride: usize) -> FlowState {
    let (n, nn) = (flow.n, flow.n * flow.n);
    let nodes = 0..=coarse.n();
    let z = nodes.clone().flat_map(|c| flow.z(c * stride).to_vec()).collect();
    let (j, jinv) = if flow.has_jacobian() {
        (
            nodes.clone().flat_map(|c| flow.j[c * stride * nn..(c * stride + 1) * nn].to_vec()).collect(),
            nodes.flat_map(|c| flow.jinv[c * stride * nn..(c * stride + 1) * nn].to_vec()).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    FlowState { grid: coarse.clone(), n, z, j, jinv, z0: flow.z0.clone(), eps: flow.eps, driver: flow.driver.clone() }
}

#[cfg(test)]
mod tests;
