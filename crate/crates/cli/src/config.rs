//! Declarative run configuration.

use std::path::PathBuf;

use gaussrde::density::{Bandwidth, RateConfig};
use gaussrde::rde::VfSpec;
use gaussrde::{CovKernel, KernelSpec, TimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Hypotheses,
    Sample,
    Density,
    Tails,
    Varadhan,
    AuditInterpolation,
    AuditMalliavin,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Hypotheses,
        Experiment::Sample,
        Experiment::Density,
        Experiment::Tails,
        Experiment::Varadhan,
        Experiment::AuditInterpolation,
        Experiment::AuditMalliavin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Hypotheses => "hypotheses",
            Experiment::Sample => "sample",
            Experiment::Density => "density",
            Experiment::Tails => "tails",
            Experiment::Varadhan => "varadhan",
            Experiment::AuditInterpolation => "audit-interpolation",
            Experiment::AuditMalliavin => "audit-malliavin",
        }
    }

    pub fn needs_vf(self) -> bool {
        matches!(self, Experiment::Density | Experiment::Tails | Experiment::Varadhan | Experiment::AuditMalliavin)
    }

    /// Experiments refused with exit code 3 when the kernel fails the covariance hypotheses.
    pub fn gated(self) -> bool {
        matches!(self, Experiment::Density | Experiment::Tails | Experiment::Varadhan | Experiment::AuditInterpolation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "yes")]
    pub dyadic: bool,
}

fn yes() -> bool {
    true
}

/// Evaluation window for densities: `points` equispaced values per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Allowed `|limit + d2|` in a Varadhan sweep.
    #[serde(default = "default_varadhan_tol")]
    pub varadhan_gap: f64,
    /// Minimum r^2 of tail fits.
    #[serde(default = "default_r2")]
    pub tail_r2: f64,
    /// Allowed spread of the normalized inverse-moment quantiles.
    #[serde(default = "default_spread")]
    pub inverse_moment_spread: f64,
    /// Tolerance of the pathwise derivative oracle is `max(oracle_abs, 3 tau)`.
    #[serde(default = "default_oracle")]
    pub oracle_abs: f64,
}

fn default_varadhan_tol() -> f64 {
    0.1
}
fn default_r2() -> f64 {
    0.9
}
fn default_spread() -> f64 {
    3.0
}
fn default_oracle() -> f64 {
    1e-4
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { varadhan_gap: default_varadhan_tol(), tail_r2: default_r2(), inverse_moment_spread: default_spread(), oracle_abs: default_oracle() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub kernel: KernelSpec,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vf: Option<VfSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Driver dimension for `sample`; otherwise taken from the vector field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Terminal time for densities and tails; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default)]
    pub y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateConfig>,
    #[serde(default = "default_fns")]
    pub n_functions: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_paths() -> usize {
    10_000
}
fn default_eps() -> Vec<f64> {
    vec![1.0]
}
fn default_fns() -> usize {
    100
}

/// Schema-level problems; mapped to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Objects built from a validated configuration.
pub struct Resolved {
    pub kernel: CovKernel,
    pub grid: TimeGrid,
    pub vf: Option<Box<dyn gaussrde::rde::VectorField>>,
    pub z0: Vec<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let bad = |m: String| ConfigError(m);
        let kernel = CovKernel::new(self.kernel.clone()).map_err(|e| bad(e.to_string()))?;
        if self.grid.n < 4 {
            return Err(bad("grid.N must be at least 4".into()));
        }
        if self.grid.dyadic && !self.grid.n.is_power_of_two() {
            return Err(bad(format!("grid.N = {} is not a power of two", self.grid.n)));
        }
        let grid = TimeGrid::uniform(kernel.horizon(), self.grid.n).map_err(|e| bad(e.to_string()))?;
        let vf = match &self.vf {
            Some(spec) => Some(spec.build().map_err(|e| bad(e.to_string()))?),
            None if self.experiment.needs_vf() => return Err(bad(format!("experiment {} needs a vf", self.experiment.name()))),
            None => None,
        };
        let z0 = match (&self.z0, &vf) {
            (Some(z), Some(v)) if z.len() != v.state_dim() => return Err(bad(format!("z0 has {} entries, vf state dimension is {}", z.len(), v.state_dim()))),
            (Some(z), _) => z.clone(),
            (None, Some(v)) => vec![0.0; v.state_dim()],
            (None, None) => Vec::new(),
        };
        if self.n_paths == 0 && self.experiment != Experiment::Hypotheses && self.experiment != Experiment::AuditInterpolation {
            return Err(bad("n_paths must be positive".into()));
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(bad("eps must be a non-empty list of positive values".into()));
        }
        if let Some(w) = &self.window {
            let n = z0.len().max(1);
            if w.lo.len() != n || w.hi.len() != n || w.points < 2 || w.lo.iter().zip(&w.hi).any(|(a, b)| !(a < b)) {
                return Err(bad("window must give lo < hi per state dimension and at least 2 points".into()));
            }
        }
        if self.experiment == Experiment::Varadhan {
            if self.y.is_empty() || self.y.iter().any(|y| y.len() != z0.len()) {
                return Err(bad("varadhan needs targets y matching the state dimension".into()));
            }
            if self.eps.len() < 3 {
                return Err(bad("varadhan needs at least three eps values".into()));
            }
        }
        if self.experiment == Experiment::Tails && self.levels.is_empty() {
            return Err(bad("tails needs levels".into()));
        }
        Ok(Resolved { kernel, grid, vf, z0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({"experiment": "density", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 64},
                           "vf": {"name": "bounded_nonlinear", "dim": 2}})
    }

    fn resolve(v: &serde_json::Value) -> Result<Resolved, ConfigError> {
        RunConfig::parse(&v.to_string())?.resolve()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(&base().to_string()).unwrap();
        assert_eq!((cfg.n_paths, cfg.seed, cfg.eps.clone(), cfg.bandwidth.clone()), (10_000, 0, vec![1.0], Bandwidth::Silverman));
        let r = cfg.resolve().unwrap();
        assert_eq!(r.z0, vec![0.0, 0.0]);
        assert_eq!(r.grid.n(), 64);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut v = base();
        v["z0"] = serde_json::json!([0.0]);
        assert!(resolve(&v).is_err());
        let mut v = base();
        v.as_object_mut().unwrap().remove("vf");
        assert!(resolve(&v).is_err());
        let mut v = base();
        v["experiment"] = serde_json::json!("varadhan");
        v["y"] = serde_json::json!([[0.1, 0.2]]);
        v["eps"] = serde_json::json!([0.5, 0.3]);
        assert!(resolve(&v).is_err());
        v["eps"] = serde_json::json!([0.5, 0.4, 0.3]);
        assert!(resolve(&v).is_ok());
        let mut v = base();
        v["grid"]["N"] = serde_json::json!(48);
        assert!(resolve(&v).is_err());
        v["grid"]["dyadic"] = serde_json::json!(false);
        assert!(resolve(&v).is_ok());
        let mut v = base();
        v["window"] = serde_json::json!({"lo": [1.0, 0.0], "hi": [0.0, 1.0], "points": 5});
        assert!(resolve(&v).is_err());
    }

    #[test]
    fn every_experiment_name_roundtrips() {
        for e in Experiment::ALL {
            let s = serde_json::to_string(&e).unwrap();
            assert_eq!(s, format!("\"{}\"", e.name()));
        }
    }
}
