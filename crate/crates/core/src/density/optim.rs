//! Quasi-Newton minimization with finite-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient norm falls below `gtol * (1 + |f|)`.
    pub gtol: f64,
    /// Stop when an accepted step changes `f` by less than `ftol * (1 + |f|)`.
    pub ftol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-9, ftol: 1e-15 }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Central differences with step `1e-5 (1 + |x_i|)`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], evals: &mut usize) -> Vec<f64> {
    let mut xs = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        xs[i] = x[i] + h;
        let fp = f(&xs);
        xs[i] = x[i] - h;
        let fm = f(&xs);
        xs[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
        *evals += 2;
    }
    g
}

/// BFGS with an Armijo backtracking line search. Non-finite objective values are
/// treated as `+inf`, so the search backs away from them.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut evals = 0;
    let mut obj = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj(x.as_slice());
    evals += 1;
    let mut g = DVector::from_vec(fd_gradient(&mut obj, x.as_slice(), &mut evals));
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut it = 0;
    while it < opts.max_iter {
        if g.norm() <= opts.gtol * (1.0 + fx.abs()) {
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let ft = obj(trial.as_slice());
            evals += 1;
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if hinv != DMatrix::identity(n, n) {
                hinv = DMatrix::identity(n, n);
                it += 1;
                continue;
            }
            break;
        };
        let gn = DVector::from_vec(fd_gradient(&mut obj, xn.as_slice(), &mut evals));
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        let small_change = (fx - fnew).abs() <= opts.ftol * (1.0 + fx.abs());
        x = xn;
        g = gn;
        fx = fnew;
        it += 1;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &s * yv.transpose() * rho;
            let b = &i - &yv * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        if small_change {
            break;
        }
    }
    BfgsResult { x: x.as_slice().to_vec(), value: fx, iterations: it, evaluations: evals }
}
