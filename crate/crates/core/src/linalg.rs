use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Cholesky factor with the escalating jitter schedule
/// 0, 1e-12, 1e-11, ..., 1e-8 (times trace / n). Returns the lower factor and the jitter used.
pub fn cholesky_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut last = 0.0;
    for k in 0..6 {
        let jitter = if k == 0 { 0.0 } else { scale * 1e-12 * 10f64.powi(k - 1) };
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        last = jitter;
    }
    Err(Error::NotPositiveDefinite { jitter: last })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)];
    }
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Ordinary least squares of `y` on `x`: (slope, intercept, r^2).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}
