//! Spectral quadrature for the fractional Ornstein-Uhlenbeck variance profile
//! `F(x) = 4 c_H x^{2H} \int_0^\infty (1 - cos u) u^{1-2H} / (lambda^2 x^2 + u^2) du`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use statrs::function::gamma::gamma;

use super::spec::QuadSpec;
use crate::error::{Error, Result};

const GL_POINTS: usize = 15;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

fn gl<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Adaptive bisection; `floor` is an absolute error below which pieces are
/// accepted regardless of depth (round-off level of the whole integral).
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    floor: f64,
    depth: u32,
) -> std::result::Result<f64, f64> {
    let m = 0.5 * (a + b);
    let (l, r) = (gl(f, a, m), gl(f, m, b));
    let err = (l + r - whole).abs();
    if err <= tol.max(floor) {
        return Ok(l + r);
    }
    if depth == 0 {
        return Err(err);
    }
    Ok(adaptive(f, a, m, l, 0.5 * tol, floor, depth - 1)? + adaptive(f, m, b, r, 0.5 * tol, floor, depth - 1)?)
}

/// Normalizing constant chosen so that `F(x) ~ x^{2H}` as `x -> 0`.
pub fn c_h(h: f64) -> f64 {
    gamma(1.0 + 2.0 * h) * (PI * h).sin() / (2.0 * PI)
}

/// `Re \int_U^\infty e^{iu} u^{-nu} du` for `U = 2 pi M`, asymptotic series.
fn cos_tail(nu: f64, u: f64) -> f64 {
    let mut coef = nu;
    let mut pow = u.powf(-nu - 1.0);
    let mut sum = coef * pow;
    for j in 1..40 {
        let a = nu + (2 * j - 1) as f64;
        coef *= -a * (a + 1.0);
        pow /= u * u;
        let term = coef * pow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Variance profile of the fractional Ornstein-Uhlenbeck process.
pub fn fou_profile(h: f64, lambda: f64, x: f64, spec: &QuadSpec) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let a = lambda * x;
    let a2 = a * a;
    let beta = 1.0 - 2.0 * h;
    let f = |u: f64| {
        let s = (0.5 * u).sin();
        2.0 * s * s * u.powf(beta) / (a2 + u * u)
    };
    let periods = (100f64.max(4.0 * a) / (2.0 * PI)).ceil() as usize;
    let upper = 2.0 * PI * periods as f64;

    let pieces: Vec<(f64, f64, f64)> = (0..periods)
        .map(|k| {
            let (lo, hi) = (2.0 * PI * k as f64, 2.0 * PI * (k + 1) as f64);
            (lo, hi, gl(&f, lo, hi))
        })
        .collect();

    // Series in (a/U)^2 for the tail; converges since U >= 4a.
    let mut tail = 0.0;
    let mut am = 1.0;
    for m in 0..200 {
        let p = 2.0 * h + 2.0 * m as f64;
        let term = am * (upper.powf(-p) / p - cos_tail(1.0 + p, upper));
        tail += term;
        if term.abs() <= 1e-18 * tail.abs() {
            break;
        }
        am *= -a2;
    }

    let rough: f64 = pieces.iter().map(|p| p.2).sum::<f64>() + tail;
    let tol = spec.rel_tol * rough.abs().max(f64::MIN_POSITIVE);
    let share = tol / periods as f64;
    let mut body = 0.0;
    for (lo, hi, whole) in pieces {
        body += adaptive(&f, lo, hi, whole, share, 1e-16 * rough.abs(), spec.max_depth)
            .map_err(|err| Error::QuadratureNonConvergence { x, err })?;
    }
    Ok(4.0 * c_h(h) * x.powf(2.0 * h) * (body + tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let v = gl(&|x: f64| x.powi(28) + 1.0, -1.0, 1.0);
        assert!((v - (2.0 / 29.0 + 2.0)).abs() < 1e-13);
    }

    #[test]
    fn ou_closed_form_at_half() {
        // H = 1/2 is the Ornstein-Uhlenbeck profile (1 - e^{-lambda x}) / lambda.
        let spec = QuadSpec::default();
        for &(lambda, x) in &[(1.0, 0.5), (2.0, 1.0), (0.3, 0.01), (5.0, 3.0)] {
            let got = fou_profile(0.5, lambda, x, &spec).unwrap();
            let want = -(-lambda * x).exp_m1() / lambda;
            assert!((got - want).abs() <= 1e-9 * want, "lambda={lambda} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn small_lambda_recovers_fbm() {
        let spec = QuadSpec::default();
        for &h in &[0.3, 0.4, 0.7] {
            let got = fou_profile(h, 1e-12, 0.8, &spec).unwrap();
            let want = 0.8f64.powf(2.0 * h);
            assert!((got - want).abs() < 1e-6, "H={h}: {got} vs {want}");
        }
    }

    #[test]
    fn impossible_tolerance_reports_nonconvergence() {
        let spec = QuadSpec { rel_tol: 1e-12, max_depth: 1 };
        assert!(matches!(
            fou_profile(0.4, 1e-12, 0.5, &spec),
            Err(Error::QuadratureNonConvergence { .. })
        ));
    }
}
