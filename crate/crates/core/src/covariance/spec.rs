use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

fn default_k_max() -> usize {
    4096
}

/// One term of a stationary variance profile `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileTerm {
    /// `scale * x^exponent`, exponent in (0, 1].
    Power { scale: f64, exponent: f64 },
    /// `scale * (1 - exp(-rate * x))`.
    SaturatingExp { scale: f64, rate: f64 },
}

impl ProfileTerm {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ProfileTerm::Power { scale, exponent } => scale * x.powf(exponent),
            ProfileTerm::SaturatingExp { scale, rate } => -scale * (-rate * x).exp_m1(),
        }
    }

    /// Local Hölder exponent of the profile at zero.
    pub fn exponent(&self) -> f64 {
        match *self {
            ProfileTerm::Power { exponent, .. } => exponent,
            ProfileTerm::SaturatingExp { .. } => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_depth: 48 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Fbm {
        #[serde(rename = "H")]
        h: f64,
    },
    Bifbm {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    SumFbm {
        #[serde(rename = "H1")]
        h1: f64,
        #[serde(rename = "H2")]
        h2: f64,
    },
    Stationary {
        profile: Vec<ProfileTerm>,
    },
    /// Stationary random Fourier series with `alpha_k^2 = C k^(-(1 + 1/rho))`.
    Fourier {
        #[serde(rename = "C", default = "one")]
        c: f64,
        #[serde(rename = "K_max", default = "default_k_max")]
        k_max: usize,
    },
    /// Fractional Ornstein-Uhlenbeck, defined through its spectral density.
    Fou {
        #[serde(rename = "H")]
        h: f64,
        lambda: f64,
        #[serde(default)]
        quadrature: QuadSpec,
    },
}

/// Declarative kernel description, e.g. `{"family":"fbm","H":0.4,"T":1.0,"rho":1.25}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl KernelSpec {
    pub fn fbm(h: f64, horizon: f64) -> Self {
        Self { family: Family::Fbm { h }, horizon, rho: None }
    }

    pub fn brownian(horizon: f64) -> Self {
        Self::fbm(0.5, horizon)
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }
}
