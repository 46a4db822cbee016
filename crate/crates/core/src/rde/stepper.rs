//! Single-step maps shared by the RDE, Jacobian and skeleton solvers.

use nalgebra::DMatrix;

use super::{Scheme, VectorField};

pub(super) fn defect(n: usize, j: &[f64], jinv: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let mut s = if r == c { -1.0 } else { 0.0 };
            for k in 0..n {
                s += j[r * n + k] * jinv[k * n + c];
            }
            worst = worst.max(s.abs());
        }
    }
    worst
}

pub(super) fn reinvert(n: usize, j: &[f64], jinv: &mut [f64]) {
    if let Some(inv) = DMatrix::from_row_slice(n, n, j).try_inverse() {
        for r in 0..n {
            for c in 0..n {
                jinv[r * n + c] = inv[(r, c)];
            }
        }
    }
}

/// `out = a * b` for row-major `n x n` matrices.
fn matmul(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for r in 0..n {
        for c in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[r * n + k] * b[k * n + c];
            }
            out[r * n + c] = s;
        }
    }
}

pub(super) struct Stepper<'a> {
    vf: &'a dyn VectorField,
    scheme: Scheme,
    jac: bool,
    n: usize,
    d: usize,
    v0: Vec<f64>,
    dv0: Vec<f64>,
    v: Vec<f64>,
    /// `d` Jacobians, one per column of `V`.
    dv: Vec<f64>,
    area: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
    vj: Vec<f64>,
    vk: Vec<f64>,
    e: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    prod: Vec<f64>,
    yz: Vec<f64>,
    yj: Vec<f64>,
    yi: Vec<f64>,
    kz: [Vec<f64>; 4],
    kj: [Vec<f64>; 4],
    ki: [Vec<f64>; 4],
}

impl<'a> Stepper<'a> {
    pub(super) fn new(vf: &'a dyn VectorField, scheme: Scheme, jac: bool) -> Self {
        let (n, d) = (vf.state_dim(), vf.driver_dim());
        let nn = n * n;
        let z = || vec![0.0; n];
        let m = || vec![0.0; nn];
        Self {
            vf,
            scheme,
            jac,
            n,
            d,
            v0: z(),
            dv0: m(),
            v: vec![0.0; n * d],
            dv: vec![0.0; d * nn],
            area: vec![0.0; d * d],
            w: z(),
            dw: m(),
            vj: z(),
            vk: z(),
            e: z(),
            h1: z(),
            h2: z(),
            prod: m(),
            yz: z(),
            yj: m(),
            yi: m(),
            kz: [z(), z(), z(), z()],
            kj: [m(), m(), m(), m()],
            ki: [m(), m(), m(), m()],
        }
    }

    /// Advances `z` (and `J`, `Jinv` when given) across one step with increment
    /// `dx` and iterated integral `x2`.
    pub(super) fn step(&mut self, z: &mut [f64], jm: Option<(&mut [f64], &mut [f64])>, dt: f64, dx: &[f64], x2: &[f64]) {
        match self.scheme {
            Scheme::LogOde => self.step_log_ode(z, jm, dt, dx, x2),
            Scheme::Taylor2 => self.step_taylor(z, jm, dt, dx, x2),
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = self.v[i * self.d + j];
        }
    }

    /// Evaluates `W(z)` into `self.w` and, if requested, `DW(z)` into `self.dw`.
    fn log_field(&mut self, z: &[f64], dt: f64, dx: &[f64], has_area: bool, want_jac: bool) {
        let (n, d, nn) = (self.n, self.d, self.n * self.n);
        let vf = self.vf;
        vf.drift(z, &mut self.v0);
        vf.diffusion(z, &mut self.v);
        for i in 0..n {
            let mut s = self.v0[i] * dt;
            for j in 0..d {
                s += self.v[i * d + j] * dx[j];
            }
            self.w[i] = s;
        }
        if want_jac || has_area {
            for j in 0..d {
                vf.diffusion_jacobian(j, z, &mut self.dv[j * nn..(j + 1) * nn]);
            }
        }
        if want_jac {
            vf.drift_jacobian(z, &mut self.dv0);
            for r in 0..nn {
                let mut s = self.dv0[r] * dt;
                for j in 0..d {
                    s += self.dv[j * nn + r] * dx[j];
                }
                self.dw[r] = s;
            }
        }
        if !has_area {
            return;
        }
        for j in 0..d {
            for k in (j + 1)..d {
                let a = self.area[j * d + k];
                if a == 0.0 {
                    continue;
                }
                let mut vj = std::mem::take(&mut self.vj);
                let mut vk = std::mem::take(&mut self.vk);
                self.column(j, &mut vj);
                self.column(k, &mut vk);
                let (dvj, dvk) = (&self.dv[j * nn..(j + 1) * nn], &self.dv[k * nn..(k + 1) * nn]);
                // [V_j, V_k] = DV_k V_j - DV_j V_k
                for i in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += dvk[i * n + l] * vj[l] - dvj[i * n + l] * vk[l];
                    }
                    self.w[i] += a * s;
                }
                if want_jac {
                    // D[V_j, V_k] e_l = D2V_k[V_j, e_l] - D2V_j[V_k, e_l] + (DV_k DV_j - DV_j DV_k) e_l
                    for l in 0..n {
                        self.e.fill(0.0);
                        self.e[l] = 1.0;
                        vf.diffusion_hessian(k, z, &vj, &self.e, &mut self.h1);
                        vf.diffusion_hessian(j, z, &vk, &self.e, &mut self.h2);
                        for i in 0..n {
                            let mut s = self.h1[i] - self.h2[i];
                            for m in 0..n {
                                s += dvk[i * n + m] * dvj[m * n + l] - dvj[i * n + m] * dvk[m * n + l];
                            }
                            self.dw[i * n + l] += a * s;
                        }
                    }
                }
                self.vj = vj;
                self.vk = vk;
            }
        }
    }

    fn step_log_ode(&mut self, z: &mut [f64], mut jm: Option<(&mut [f64], &mut [f64])>, dt: f64, dx: &[f64], x2: &[f64]) {
        let (n, d, nn) = (self.n, self.d, self.n * self.n);
        let mut has_area = false;
        for j in 0..d {
            for k in 0..d {
                let a = 0.5 * (x2[j * d + k] - x2[k * d + j]);
                self.area[j * d + k] = a;
                has_area |= a != 0.0;
            }
        }
        let want_jac = self.jac && jm.is_some();
        const C: [f64; 3] = [0.5, 0.5, 1.0];
        self.yz.copy_from_slice(z);
        if let Some((j, ji)) = jm.as_ref() {
            self.yj.copy_from_slice(j);
            self.yi.copy_from_slice(ji);
        }
        for s in 0..4 {
            let yz = std::mem::take(&mut self.yz);
            self.log_field(&yz, dt, dx, has_area, want_jac);
            self.yz = yz;
            self.kz[s].copy_from_slice(&self.w);
            if want_jac {
                matmul(n, &self.dw, &self.yj, &mut self.kj[s]);
                matmul(n, &self.yi, &self.dw, &mut self.ki[s]);
                for x in self.ki[s].iter_mut() {
                    *x = -*x;
                }
            }
            if s < 3 {
                let c = C[s];
                for i in 0..n {
                    self.yz[i] = z[i] + c * self.kz[s][i];
                }
                if let Some((j, ji)) = jm.as_ref() {
                    for r in 0..nn {
                        self.yj[r] = j[r] + c * self.kj[s][r];
                        self.yi[r] = ji[r] + c * self.ki[s][r];
                    }
                }
            }
        }
        for i in 0..n {
            z[i] += (self.kz[0][i] + 2.0 * self.kz[1][i] + 2.0 * self.kz[2][i] + self.kz[3][i]) / 6.0;
        }
        if let Some((j, ji)) = jm.as_mut() {
            for r in 0..nn {
                j[r] += (self.kj[0][r] + 2.0 * self.kj[1][r] + 2.0 * self.kj[2][r] + self.kj[3][r]) / 6.0;
                ji[r] += (self.ki[0][r] + 2.0 * self.ki[1][r] + 2.0 * self.ki[2][r] + self.ki[3][r]) / 6.0;
            }
        }
    }

    fn step_taylor(&mut self, z: &mut [f64], jm: Option<(&mut [f64], &mut [f64])>, dt: f64, dx: &[f64], x2: &[f64]) {
        let (n, d, nn) = (self.n, self.d, self.n * self.n);
        let vf = self.vf;
        vf.drift(z, &mut self.v0);
        vf.diffusion(z, &mut self.v);
        for j in 0..d {
            vf.diffusion_jacobian(j, z, &mut self.dv[j * nn..(j + 1) * nn]);
        }
        // Increment of Z.
        for i in 0..n {
            let mut s = self.v0[i] * dt;
            for j in 0..d {
                s += self.v[i * d + j] * dx[j];
            }
            self.w[i] = s;
        }
        for j in 0..d {
            for k in 0..d {
                let x = x2[j * d + k];
                if x == 0.0 {
                    continue;
                }
                for i in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += self.dv[k * nn + i * n + l] * self.v[l * d + j];
                    }
                    self.w[i] += x * s;
                }
            }
        }
        if let (true, Some((jmat, jinv))) = (self.jac, jm) {
            // B = DV_0 dt + sum_j DV_j dx_j + sum_{j,k} x2[j,k] D(DV_k V_j)
            vf.drift_jacobian(z, &mut self.dv0);
            for r in 0..nn {
                let mut s = self.dv0[r] * dt;
                for j in 0..d {
                    s += self.dv[j * nn + r] * dx[j];
                }
                self.dw[r] = s;
            }
            for j in 0..d {
                let mut vj = std::mem::take(&mut self.vj);
                self.column(j, &mut vj);
                for k in 0..d {
                    let x = x2[j * d + k];
                    if x == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        self.e.fill(0.0);
                        self.e[l] = 1.0;
                        vf.diffusion_hessian(k, z, &vj, &self.e, &mut self.h1);
                        for i in 0..n {
                            let mut s = self.h1[i];
                            for m in 0..n {
                                s += self.dv[k * nn + i * n + m] * self.dv[j * nn + m * n + l];
                            }
                            self.dw[i * n + l] += x * s;
                        }
                    }
                }
                self.vj = vj;
            }
            // J <- (I + B) J, Jinv <- Jinv (I - B + B^2)
            matmul(n, &self.dw, jmat, &mut self.prod);
            for r in 0..nn {
                jmat[r] += self.prod[r];
            }
            matmul(n, &self.dw, &self.dw, &mut self.yj);
            for r in 0..nn {
                self.yj[r] -= self.dw[r];
            }
            matmul(n, jinv, &self.yj, &mut self.prod);
            for r in 0..nn {
                jinv[r] += self.prod[r];
            }
        }
        for i in 0..n {
            z[i] += self.w[i];
        }
    }
}
