//! Vector fields `V_0, V_1, ..., V_d` on `R^n` with analytic derivatives.
//!
//! Layouts are row-major: the diffusion matrix has `out[i * d + j] = V_j^i(z)`,
//! Jacobians have `out[i * n + k] = d_k V^i(z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait VectorField: Send + Sync {
    fn name(&self) -> String;
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;
    fn drift(&self, z: &[f64], out: &mut [f64]);
    fn drift_jacobian(&self, z: &[f64], out: &mut [f64]);
    fn diffusion(&self, z: &[f64], out: &mut [f64]);
    /// Jacobian of the column `V_j`.
    fn diffusion_jacobian(&self, j: usize, z: &[f64], out: &mut [f64]);
    /// `out_i = sum_{k,l} d_k d_l V_j^i(z) v_k w_l`.
    fn diffusion_hessian(&self, j: usize, z: &[f64], v: &[f64], w: &[f64], out: &mut [f64]);

    /// Known lower bound for the smallest eigenvalue of `V V^T`, if any.
    fn elliptic_constant(&self) -> Option<f64> {
        None
    }

    /// Whether the fields are bounded with bounded derivatives.
    fn bounded(&self) -> bool {
        true
    }

    /// Box used by the default ellipticity scan.
    fn scan_box(&self, z0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (z0.iter().map(|z| z - 5.0).collect(), z0.iter().map(|z| z + 5.0).collect())
    }
}

/// Catalog entries addressable from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum VfSpec {
    Identity {
        #[serde(default = "one")]
        dim: usize,
    },
    ScalarLinear {
        sigma: f64,
    },
    RotationMix,
    BoundedNonlinear {
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

impl VfSpec {
    pub fn build(&self) -> Result<Box<dyn VectorField>> {
        Ok(match *self {
            VfSpec::Identity { dim } if dim >= 1 => Box::new(Identity { n: dim }),
            VfSpec::ScalarLinear { sigma } if sigma.is_finite() => Box::new(ScalarLinear { sigma }),
            VfSpec::RotationMix => Box::new(RotationMix),
            VfSpec::BoundedNonlinear { dim } if dim == 1 || dim == 2 => Box::new(BoundedNonlinear { n: dim }),
            ref other => return Err(Error::InvalidParameter(format!("unsupported vector field {other:?}"))),
        })
    }

    pub fn catalog() -> Vec<&'static str> {
        vec!["identity", "scalar_linear", "rotation_mix", "bounded_nonlinear"]
    }
}

/// `V = I`, `V_0 = 0`.
#[derive(Clone, Debug)]
pub struct Identity {
    pub n: usize,
}

impl VectorField for Identity {
    fn name(&self) -> String {
        format!("identity({})", self.n)
    }
    fn state_dim(&self) -> usize {
        self.n
    }
    fn driver_dim(&self) -> usize {
        self.n
    }
    fn drift(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn drift_jacobian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.n {
            out[i * self.n + i] = 1.0;
        }
    }
    fn diffusion_jacobian(&self, _: usize, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_hessian(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn elliptic_constant(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `V(z) = sigma z` in one dimension. Unbounded; used where its closed form is the oracle.
#[derive(Clone, Debug)]
pub struct ScalarLinear {
    pub sigma: f64,
}

impl VectorField for ScalarLinear {
    fn name(&self) -> String {
        format!("scalar_linear({})", self.sigma)
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn driver_dim(&self) -> usize {
        1
    }
    fn drift(&self, _: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn drift_jacobian(&self, _: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, z: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * z[0];
    }
    fn diffusion_jacobian(&self, _: usize, _: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn diffusion_hessian(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn bounded(&self) -> bool {
        false
    }
    fn scan_box(&self, z0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![z0[0] * (-3f64).exp()], vec![z0[0] * 3f64.exp()])
    }
}

/// `V = I + 0.1 P(x)` with `P = [[sin x1, sin x2], [sin(x1 + x2), -sin x1]]`,
/// `V_0 = -0.2 (sin x1, sin x2)`.
#[derive(Clone, Debug)]
pub struct RotationMix;

impl VectorField for RotationMix {
    fn name(&self) -> String {
        "rotation_mix".into()
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn driver_dim(&self) -> usize {
        2
    }
    fn drift(&self, z: &[f64], out: &mut [f64]) {
        out[0] = -0.2 * z[0].sin();
        out[1] = -0.2 * z[1].sin();
    }
    fn drift_jacobian(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[-0.2 * z[0].cos(), 0.0, 0.0, -0.2 * z[1].cos()]);
    }
    fn diffusion(&self, z: &[f64], out: &mut [f64]) {
        let (s1, s2, s12) = (z[0].sin(), z[1].sin(), (z[0] + z[1]).sin());
        out.copy_from_slice(&[1.0 + 0.1 * s1, 0.1 * s2, 0.1 * s12, 1.0 - 0.1 * s1]);
    }
    fn diffusion_jacobian(&self, j: usize, z: &[f64], out: &mut [f64]) {
        let (c1, c2, c12) = (z[0].cos(), z[1].cos(), (z[0] + z[1]).cos());
        // Column j of V: (V_j^1, V_j^2).
        let m = if j == 0 {
            [0.1 * c1, 0.0, 0.1 * c12, 0.1 * c12]
        } else {
            [0.0, 0.1 * c2, -0.1 * c1, 0.0]
        };
        out.copy_from_slice(&m);
    }
    fn diffusion_hessian(&self, j: usize, z: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let (s1, s2, s12) = (z[0].sin(), z[1].sin(), (z[0] + z[1]).sin());
        let vw_sum = (v[0] + v[1]) * (w[0] + w[1]);
        if j == 0 {
            out[0] = -0.1 * s1 * v[0] * w[0];
            out[1] = -0.1 * s12 * vw_sum;
        } else {
            out[0] = -0.1 * s2 * v[1] * w[1];
            out[1] = 0.1 * s1 * v[0] * w[0];
        }
    }
    fn elliptic_constant(&self) -> Option<f64> {
        Some(0.64)
    }
}

/// Smooth bounded fields built from `tanh`.
///
/// n = 1: `V_0 = -tanh(z) / 2`, `V = 1 + tanh(z) / 2`.
/// n = 2: `V = I + P` with `P = [[0.4 t1, 0.2 t2], [0.2 t1, 0.4 t2]]`, `t_i = tanh z_i`,
/// and `V_0 = -tanh(z) / 2` componentwise.
#[derive(Clone, Debug)]
pub struct BoundedNonlinear {
    pub n: usize,
}

fn sech2(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

impl VectorField for BoundedNonlinear {
    fn name(&self) -> String {
        format!("bounded_nonlinear({})", self.n)
    }
    fn state_dim(&self) -> usize {
        self.n
    }
    fn driver_dim(&self) -> usize {
        self.n
    }
    fn drift(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = -0.5 * z[i].tanh();
        }
    }
    fn drift_jacobian(&self, z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.n {
            out[i * self.n + i] = -0.5 * sech2(z[i]);
        }
    }
    fn diffusion(&self, z: &[f64], out: &mut [f64]) {
        if self.n == 1 {
            out[0] = 1.0 + 0.5 * z[0].tanh();
        } else {
            let (t1, t2) = (z[0].tanh(), z[1].tanh());
            out.copy_from_slice(&[1.0 + 0.4 * t1, 0.2 * t2, 0.2 * t1, 1.0 + 0.4 * t2]);
        }
    }
    fn diffusion_jacobian(&self, j: usize, z: &[f64], out: &mut [f64]) {
        if self.n == 1 {
            out[0] = 0.5 * sech2(z[0]);
        } else if j == 0 {
            // V_0 column = (1 + 0.4 t1, 0.2 t1): depends on z1 only.
            let s = sech2(z[0]);
            out.copy_from_slice(&[0.4 * s, 0.0, 0.2 * s, 0.0]);
        } else {
            // V_1 column = (0.2 t2, 1 + 0.4 t2): depends on z2 only.
            let s = sech2(z[1]);
            out.copy_from_slice(&[0.0, 0.2 * s, 0.0, 0.4 * s]);
        }
    }
    fn diffusion_hessian(&self, j: usize, z: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let dd = |x: f64| -2.0 * x.tanh() * sech2(x);
        if self.n == 1 {
            out[0] = 0.5 * dd(z[0]) * v[0] * w[0];
        } else if j == 0 {
            let h = dd(z[0]) * v[0] * w[0];
            out[0] = 0.4 * h;
            out[1] = 0.2 * h;
        } else {
            let h = dd(z[1]) * v[1] * w[1];
            out[0] = 0.2 * h;
            out[1] = 0.4 * h;
        }
    }
    fn elliptic_constant(&self) -> Option<f64> {
        Some(if self.n == 1 { 0.25 } else { (1.0 - 0.4f64.sqrt()).powi(2) })
    }
}
