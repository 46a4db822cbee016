//! Covariance kernels of centered Gaussian drivers started at zero, and the
//! scalar diagnostics built on them.

mod hypotheses;
mod quadrature;
mod spec;
mod variation;

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

pub use hypotheses::{check_hypotheses, HolderCheck, HypothesisReport, SignCheck};
pub use quadrature::{c_h, fou_profile};
pub use spec::{Family, KernelSpec, ProfileTerm, QuadSpec};
pub use variation::{eta, kappa, mixed_on_gram, mixed_variation, Rect, Variation};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Exponent of the Cameron-Martin embedding into q-variation paths.
pub fn embedding_q(rho: f64) -> f64 {
    1.0 / (0.5 / rho + 0.5)
}

#[derive(Clone, Debug)]
pub struct CovKernel {
    spec: KernelSpec,
    rho: f64,
}

fn check_hurst(name: &str, h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {h}")));
    }
    Ok(())
}

impl CovKernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let horizon = spec.horizon;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
        }
        let natural = match &spec.family {
            Family::Fbm { h } => {
                check_hurst("H", *h)?;
                Some(1.0 / (2.0 * h))
            }
            Family::Bifbm { h, k } => {
                check_hurst("H", *h)?;
                if !(*k > 0.0 && *k <= 1.0) {
                    return Err(Error::InvalidParameter(format!("K must lie in (0, 1], got {k}")));
                }
                if h * k > 0.5 {
                    return Err(Error::InvalidParameter(format!("HK must not exceed 1/2, got {}", h * k)));
                }
                Some(1.0 / (2.0 * h * k))
            }
            Family::SumFbm { h1, h2 } => {
                check_hurst("H1", *h1)?;
                check_hurst("H2", *h2)?;
                Some(1.0 / (2.0 * h1.min(*h2)))
            }
            Family::Stationary { profile } => {
                if profile.is_empty() {
                    return Err(Error::InvalidParameter("stationary profile is empty".into()));
                }
                for term in profile {
                    match *term {
                        ProfileTerm::Power { scale, exponent } => {
                            if !(scale > 0.0 && exponent > 0.0 && exponent <= 1.0) {
                                return Err(Error::InvalidParameter(format!(
                                    "power term needs scale > 0 and exponent in (0, 1], got {scale}, {exponent}"
                                )));
                            }
                        }
                        ProfileTerm::SaturatingExp { scale, rate } => {
                            if !(scale > 0.0 && rate > 0.0) {
                                return Err(Error::InvalidParameter(format!(
                                    "saturating_exp term needs positive scale and rate, got {scale}, {rate}"
                                )));
                            }
                        }
                    }
                }
                let e = profile.iter().map(ProfileTerm::exponent).fold(f64::INFINITY, f64::min);
                Some(1.0 / e)
            }
            Family::Fourier { c, k_max } => {
                if !(*c > 0.0) || *k_max == 0 {
                    return Err(Error::InvalidParameter("fourier needs C > 0 and K_max >= 1".into()));
                }
                if horizon > 2.0 * PI {
                    return Err(Error::InvalidParameter(format!("fourier horizon must not exceed 2 pi, got {horizon}")));
                }
                match spec.rho {
                    Some(r) if (1.0..2.0).contains(&r) => None,
                    _ => {
                        return Err(Error::InvalidParameter(
                            "fourier needs an explicit rho in [1, 2)".into(),
                        ))
                    }
                }
            }
            Family::Fou { h, lambda, quadrature } => {
                check_hurst("H", *h)?;
                if !(*lambda > 0.0) {
                    return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
                }
                if !(quadrature.rel_tol > 0.0) {
                    return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
                }
                Some(1.0 / (2.0 * h))
            }
        };
        let rho = match (spec.rho, natural) {
            (Some(r), _) => r,
            (None, Some(r)) => r.max(1.0),
            (None, None) => unreachable!(),
        };
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be >= 1, got {rho}")));
        }
        Ok(Self { spec, rho })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Canonical identifier: the JSON form of the spec.
    pub fn id(&self) -> String {
        serde_json::to_string(&self.spec).expect("kernel spec serializes")
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    /// Whether the kernel has stationary increments with variance profile `F`.
    pub fn is_stationary(&self) -> bool {
        matches!(
            self.spec.family,
            Family::Stationary { .. } | Family::Fourier { .. } | Family::Fou { .. }
        )
    }

    /// Bound on the neglected Fourier coefficient mass, for truncated series.
    pub fn truncation_error(&self) -> Option<f64> {
        match self.spec.family {
            Family::Fourier { c, k_max } => {
                let a = 1.0 + 1.0 / self.rho;
                Some(c * (k_max as f64).powf(1.0 - a) / (a - 1.0))
            }
            _ => None,
        }
    }

    /// Increment variance `F(x) = E[(X_{s+x} - X_s)^2]` for stationary families.
    pub fn profile(&self, x: f64) -> Result<f64> {
        let x = x.abs();
        match &self.spec.family {
            Family::Stationary { profile } => Ok(profile.iter().map(|p| p.value(x)).sum()),
            Family::Fourier { c, k_max } => {
                let a = 1.0 + 1.0 / self.rho;
                let mut sum = 0.0;
                for k in (1..=*k_max).rev() {
                    let s = (0.5 * k as f64 * x).sin();
                    sum += c * (k as f64).powf(-a) * s * s;
                }
                Ok(4.0 * sum)
            }
            Family::Fou { h, lambda, quadrature } => fou_profile(*h, *lambda, x, quadrature),
            _ => Err(Error::InvalidParameter("profile is defined for stationary families only".into())),
        }
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(t >= -1e-12 * horizon && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange { t, horizon });
        }
        Ok(())
    }

    fn closed_form(&self, s: f64, t: f64) -> Option<f64> {
        let (s, t) = (s.max(0.0), t.max(0.0));
        let d = (t - s).abs();
        let fbm = |h: f64| 0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - d.powf(2.0 * h));
        match self.spec.family {
            Family::Fbm { h } => Some(fbm(h)),
            Family::Bifbm { h, k } => {
                let a = (s.powf(2.0 * h) + t.powf(2.0 * h)).powf(k);
                Some(2f64.powf(-k) * (a - d.powf(2.0 * h * k)))
            }
            Family::SumFbm { h1, h2 } => Some(fbm(h1) + fbm(h2)),
            _ => None,
        }
    }

    /// Covariance `R(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        self.check_range(s)?;
        self.check_range(t)?;
        if let Some(v) = self.closed_form(s, t) {
            return Ok(v);
        }
        let (s, t) = (s.max(0.0), t.max(0.0));
        Ok(0.5 * (self.profile(s)? + self.profile(t)? - self.profile(t - s)?))
    }

    /// `E[(X_t - X_s)(X_v - X_u)]`.
    pub fn rect_increment(&self, s: f64, t: f64, u: f64, v: f64) -> Result<f64> {
        if s == t || u == v {
            self.check_range(s)?;
            self.check_range(u)?;
            return Ok(0.0);
        }
        Ok(self.eval(t, v)? - self.eval(t, u)? - self.eval(s, v)? + self.eval(s, u)?)
    }

    pub fn sigma_sq(&self, s: f64, t: f64) -> Result<f64> {
        if self.is_stationary() {
            self.check_range(s)?;
            self.check_range(t)?;
            return self.profile(t - s);
        }
        self.rect_increment(s, t, s, t)
    }

    pub fn sigma_sq0(&self, t: f64) -> Result<f64> {
        self.sigma_sq(0.0, t)
    }

    /// Covariance matrix `[R(t_i, t_j)]` over all grid nodes including `t_0 = 0`.
    pub fn gram(&self, grid: &TimeGrid) -> Result<Gram> {
        let nodes = grid.nodes();
        self.check_range(grid.horizon())?;
        let m = nodes.len();
        let mut r = DMatrix::zeros(m, m);
        if self.is_stationary() {
            // Profile evaluations are the expensive part; reuse them across the matrix.
            let scale = (1u64 << 40) as f64 / self.horizon();
            let mut memo: HashMap<u64, f64> = HashMap::new();
            let mut prof = |x: f64| -> Result<f64> {
                let key = (x.abs() * scale).round() as u64;
                if let Some(v) = memo.get(&key) {
                    return Ok(*v);
                }
                let v = self.profile(x)?;
                memo.insert(key, v);
                Ok(v)
            };
            let diag: Vec<f64> = nodes.iter().map(|&t| prof(t)).collect::<Result<_>>()?;
            for i in 0..m {
                for j in 0..=i {
                    let v = 0.5 * (diag[i] + diag[j] - prof(nodes[i] - nodes[j])?);
                    r[(i, j)] = v;
                    r[(j, i)] = v;
                }
            }
        } else {
            for i in 0..m {
                for j in 0..=i {
                    let v = self.closed_form(nodes[i], nodes[j]).expect("closed form family");
                    r[(i, j)] = v;
                    r[(j, i)] = v;
                }
            }
        }
        Ok(Gram { grid: grid.clone(), r })
    }
}

/// Node covariance on a grid, with rectangle and cell-increment views.
#[derive(Clone, Debug)]
pub struct Gram {
    grid: TimeGrid,
    r: DMatrix<f64>,
}

impl Gram {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `R^{t_a t_b}_{t_c t_d}` by node indices.
    #[inline]
    pub fn rect(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let r = &self.r;
        r[(b, d)] - r[(b, c)] - r[(a, d)] + r[(a, c)]
    }

    /// Covariance of the cell increments, `Q_ij = R^{t_i t_{i+1}}_{t_j t_{j+1}}`.
    pub fn cell_cov(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        DMatrix::from_fn(n, n, |i, j| self.rect(i, i + 1, j, j + 1))
    }

    /// Covariance of the nodes `t_1..t_N`, the sampling target.
    pub fn interior(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        self.r.view((1, 1), (n, n)).into_owned()
    }

    /// Left-endpoint double Riemann-Stieltjes sum `sum_ij f_i g_j Q_ij` for step
    /// functions given by their cell values.
    pub fn step_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let n = self.grid.n();
        if f.len() != n || g.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "step functions need {n} cell values, got {} and {}",
                f.len(),
                g.len()
            )));
        }
        let mut total = 0.0;
        for i in 0..n {
            if f[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..n {
                row += self.rect(i, i + 1, j, j + 1) * g[j];
            }
            total += f[i] * row;
        }
        Ok(total)
    }
}

/// One representative kernel per family, on `[0, 1]`.
pub fn examples() -> Vec<CovKernel> {
    let specs = [
        r#"{"family":"fbm","H":0.4,"T":1.0}"#,
        r#"{"family":"bifbm","H":0.45,"K":0.8,"T":1.0}"#,
        r#"{"family":"sum_fbm","H1":0.4,"H2":0.7,"T":1.0}"#,
        r#"{"family":"stationary","T":1.0,"profile":[{"kind":"power","scale":1.0,"exponent":0.8},{"kind":"saturating_exp","scale":0.5,"rate":2.0}]}"#,
        r#"{"family":"fourier","T":1.0,"rho":1.4,"K_max":512}"#,
        r#"{"family":"fou","H":0.4,"lambda":1.5,"T":1.0}"#,
    ];
    specs.iter().map(|s| CovKernel::new(serde_json::from_str(s).expect("valid spec")).expect("valid kernel")).collect()
}

/// Standalone form of [`Gram::step_inner`].
pub fn step_inner(k: &CovKernel, grid: &TimeGrid, f: &[f64], g: &[f64]) -> Result<f64> {
    k.gram(grid)?.step_inner(f, g)
}
