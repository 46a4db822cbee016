use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VectorField;
use crate::error::{Error, Result};
use crate::rng;

/// Values of `lambda_hat` at or below this are treated as non-elliptic.
pub const ELLIPTIC_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub lambda_hat: f64,
    pub argmin: Vec<f64>,
    pub samples: usize,
    pub elliptic: bool,
}

/// Smallest eigenvalue of `V(x) V(x)^T`.
pub fn min_gram_eigenvalue(vf: &dyn VectorField, x: &[f64], buf: &mut [f64]) -> f64 {
    let (n, d) = (vf.state_dim(), vf.driver_dim());
    vf.diffusion(x, buf);
    let v = DMatrix::from_row_slice(n, d, buf);
    (&v * v.transpose()).symmetric_eigenvalues().min()
}

/// Minimum of `lambda_min(V V^T)` over the box centre, its corners and
/// `n_samples` uniform points.
pub fn ellipticity_scan_box(vf: &dyn VectorField, lo: &[f64], hi: &[f64], n_samples: usize, seed: u64) -> Result<EllipticityReport> {
    let n = vf.state_dim();
    if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidParameter("malformed scan box".into()));
    }
    let mut points: Vec<Vec<f64>> = vec![lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()];
    for mask in 0..(1usize << n) {
        points.push((0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
    }
    let mut r = rng::stream(seed, 0, 0);
    for _ in 0..n_samples {
        points.push((0..n).map(|i| lo[i] + (hi[i] - lo[i]) * r.random::<f64>()).collect());
    }
    let mut buf = vec![0.0; n * vf.driver_dim()];
    let mut best = (f64::INFINITY, Vec::new());
    for p in points.iter() {
        let lam = min_gram_eigenvalue(vf, p, &mut buf);
        if !lam.is_finite() {
            return Err(Error::NotElliptic(lam));
        }
        if lam < best.0 {
            best = (lam, p.clone());
        }
    }
    Ok(EllipticityReport { lambda_hat: best.0, argmin: best.1, samples: points.len(), elliptic: best.0 > ELLIPTIC_FLOOR })
}

/// Scan over the field's own box around `z0`.
pub fn ellipticity_scan(vf: &dyn VectorField, z0: &[f64], n_samples: usize, seed: u64) -> Result<EllipticityReport> {
    let (lo, hi) = vf.scan_box(z0);
    ellipticity_scan_box(vf, &lo, &hi, n_samples, seed)
}
