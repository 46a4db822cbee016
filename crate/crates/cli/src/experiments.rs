//! Experiment runners. Each returns a report plus in-memory data files.

use gaussrde::covariance::{check_hypotheses, eta, kappa, HypothesisReport};
use gaussrde::density::{
    self, kde, rate_function, simulate, tail_fit, tail_probability_check, varadhan_curve, DensityEstimate, RateConfig, VaradhanSweep,
};
use gaussrde::gaussian_path::{path_csv, write_ensemble, CMElement, PathSampler};
use gaussrde::malliavin::{interpolation_audit, inverse_moment_scaling, kernel_directional_derivative, malliavin_matrix_with, pathwise_derivative};
use gaussrde::rde::{self, ellipticity_scan, VectorField};
use gaussrde::{rng, CovKernel, Error as CoreError, RoughPath2, TimeGrid};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, Resolved, RunConfig};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub kernel: String,
    pub config_sha256: String,
    pub seed: u64,
    pub pass: bool,
    pub gate: Option<String>,
    pub checks: Vec<Check>,
    pub summary: Vec<Metric>,
    pub results: Value,
}

pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

/// Failure modes with distinct exit codes.
#[derive(Debug)]
pub enum RunError {
    /// A gated experiment was refused; the report explains why.
    Gate(Box<Outcome>),
    Runtime(anyhow::Error),
}

impl std::fmt::Debug for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Outcome({})", self.report.experiment)
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Runtime(e.into())
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Runtime(e)
    }
}

struct Builder {
    checks: Vec<Check>,
    summary: Vec<Metric>,
    files: Vec<(String, Vec<u8>)>,
}

impl Builder {
    fn new() -> Self {
        Self { checks: Vec::new(), summary: Vec::new(), files: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.summary.push(Metric { name: name.into(), value });
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn finish(self, cfg: &RunConfig, r: &Resolved, hash: &str, gate: Option<String>, results: Value) -> Outcome {
        let pass = gate.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        Outcome {
            report: Report {
                tool: "gaussrde".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                experiment: cfg.experiment.name().into(),
                kernel: r.kernel.id(),
                config_sha256: hash.into(),
                seed: cfg.seed,
                pass,
                gate,
                checks: self.checks,
                summary: self.summary,
                results,
            },
            files: self.files,
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn vf_of(r: &Resolved) -> &dyn VectorField {
    r.vf.as_deref().expect("validated: experiment has a vector field")
}

fn terminal_node(cfg: &RunConfig, grid: &TimeGrid) -> Result<usize, RunError> {
    let t = cfg.t.unwrap_or(grid.horizon());
    Ok(grid.index_of(t)?)
}

/// Runs the configured experiment. `hash` is the sha256 of the config bytes.
pub fn run(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    if cfg.experiment.gated() {
        let hyp = check_hypotheses(&r.kernel, &r.grid, None)?;
        if !hyp.pass {
            let mut b = Builder::new();
            b.check("covariance_hypotheses", false, hypothesis_detail(&hyp));
            let gate = format!("{} fails the covariance hypotheses on N = {}", r.kernel.id(), r.grid.n());
            return Err(RunError::Gate(Box::new(b.finish(cfg, r, hash, Some(gate), json!({ "hypotheses": to_value(&hyp) })))));
        }
    }
    if let Some(vf) = r.vf.as_deref() {
        if matches!(cfg.experiment, Experiment::Density | Experiment::Varadhan) {
            let ell = ellipticity_scan(vf, &r.z0, 1000, cfg.seed)?;
            if !ell.elliptic {
                let mut b = Builder::new();
                b.check("ellipticity", false, format!("lambda_hat = {:e}", ell.lambda_hat));
                let gate = format!("{} is not uniformly elliptic on its scan box", vf.name());
                return Err(RunError::Gate(Box::new(b.finish(cfg, r, hash, Some(gate), json!({ "ellipticity": to_value(&ell) })))));
            }
        }
    }
    match cfg.experiment {
        Experiment::Hypotheses => hypotheses(cfg, r, hash),
        Experiment::Sample => sample(cfg, r, hash),
        Experiment::Density => density_run(cfg, r, hash),
        Experiment::Tails => tails(cfg, r, hash),
        Experiment::Varadhan => varadhan(cfg, r, hash),
        Experiment::AuditInterpolation => audit_interpolation(cfg, r, hash),
        Experiment::AuditMalliavin => audit_malliavin(cfg, r, hash),
    }
}

fn hypothesis_detail(h: &HypothesisReport) -> String {
    match h.negative_correlation.witness {
        Some(w) if !h.negative_correlation.pass => {
            format!("negative correlation violated by {:e} at (s, t, u, v) = ({}, {}, {}, {})", h.negative_correlation.worst_violation, w[0], w[1], w[2], w[3])
        }
        _ => format!("c_X = {:e}, alpha = {:.4}", h.c_x_estimate, h.alpha_estimate),
    }
}

fn hypotheses(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let hyp = check_hypotheses(&r.kernel, &r.grid, None)?;
    let mut b = Builder::new();
    let nc = &hyp.negative_correlation;
    let witness = nc.witness.map(|w| format!(" witness ({}, {}, {}, {})", w[0], w[1], w[2], w[3])).unwrap_or_default();
    b.check("negative_correlation", nc.pass, format!("worst violation {:e}{witness}", nc.worst_violation));
    let dd = &hyp.diagonal_dominance;
    b.check("diagonal_dominance", dd.pass, format!("worst violation {:e}", dd.worst_violation));
    b.check("nondeterminism", hyp.c_x_estimate > 0.0, format!("c_X = {:e}, alpha = {:.4}", hyp.c_x_estimate, hyp.alpha_estimate));
    b.check(
        "holder_controlled",
        hyp.holder_controlled.pass,
        format!("exponent {:.4}, constant {:.4}", hyp.holder_controlled.exponent, hyp.holder_controlled.constant),
    );
    b.metric("c_X", hyp.c_x_estimate);
    b.metric("alpha", hyp.alpha_estimate);
    let horizon = r.grid.horizon();
    let mut scales = Vec::new();
    for frac in [0.25, 0.5, 1.0] {
        let t = frac * horizon;
        let k = kappa(&r.kernel, 0.0, t, &r.grid)?;
        let e = eta(&r.kernel, t, &r.grid)?;
        scales.push(json!({ "t": t, "kappa": k, "eta": e, "sigma_sq": r.kernel.sigma_sq0(t)? }));
        if frac == 1.0 {
            b.metric("kappa_T", k);
            b.metric("eta_T", e);
        }
    }
    if let Some(v) = hyp.valid_horizon {
        b.metric("valid_horizon", v);
    }
    let results = json!({ "hypotheses": to_value(&hyp), "scales": scales });
    Ok(b.finish(cfg, r, hash, None, results))
}

fn sample(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let d = cfg.d.or(r.vf.as_ref().map(|v| v.driver_dim())).unwrap_or(1);
    let sampler = PathSampler::new(&r.kernel, &r.grid, d, cfg.seed)?;
    let ens = sampler.ensemble(cfg.n_paths);
    let mut b = Builder::new();
    let n = r.grid.n();
    let target = r.kernel.sigma_sq0(r.grid.horizon())?;
    let m = cfg.n_paths as f64;
    let mut vars = Vec::new();
    for c in 0..d {
        let var = (0..cfg.n_paths).map(|p| ens.value(p, n, c).powi(2)).sum::<f64>() / m;
        let se = target * (2.0 / m).sqrt();
        b.check(format!("terminal_variance[{c}]"), (var - target).abs() <= 5.0 * se, format!("{var:.6} vs {target:.6} (se {se:.2e})"));
        vars.push(var);
    }
    let trace = sampler.gram().interior().trace();
    b.check("cholesky_jitter", sampler.jitter() <= 1e-8 * trace / n as f64, format!("{:e}", sampler.jitter()));
    b.metric("sigma_sq_T", target);
    b.metric("jitter", sampler.jitter());
    let mut bin = Vec::new();
    write_ensemble(&ens, &mut bin)?;
    b.file("ensemble.bin", bin);
    b.file("path0.csv", path_csv(&ens, 0).into_bytes());
    Ok(b.finish(cfg, r, hash, None, json!({ "terminal_variance": vars, "d": d, "n_paths": cfg.n_paths })))
}

fn axes_for(cfg: &RunConfig, samples: &[f64], n: usize) -> Vec<Vec<f64>> {
    if let Some(w) = &cfg.window {
        return (0..n).map(|j| density::linspace(w.lo[j], w.hi[j], w.points)).collect();
    }
    let h = density::silverman(samples, n);
    let points = if n == 1 { 101 } else { 41 };
    (0..n)
        .map(|j| {
            let (lo, hi) = samples.iter().skip(j).step_by(n).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            density::linspace(lo - 3.0 * h[j], hi + 3.0 * h[j], points)
        })
        .collect()
}

fn density_csv(est: &DensityEstimate) -> Vec<u8> {
    let n = est.axes.len();
    let mut out = (1..=n).map(|j| format!("y{j}")).collect::<Vec<_>>().join(",");
    out.push_str(",p_hat,se\n");
    for i in 0..est.len() {
        for y in est.point(i) {
            out.push_str(&format!("{y},"));
        }
        out.push_str(&format!("{},{}\n", est.values[i], est.se[i]));
    }
    out.into_bytes()
}

fn density_run(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let vf = vf_of(r);
    let t_node = terminal_node(cfg, &r.grid)?;
    let t = r.grid.nodes()[t_node];
    let eps = cfg.eps[0];
    let sim = simulate(&r.kernel, &r.grid, vf, &r.z0, eps, t_node, cfg.n_paths, cfg.seed)?;
    let axes = axes_for(cfg, &sim.terminal, sim.n);
    let est = kde(&sim.terminal, sim.n, &axes, &cfg.bandwidth, t)?;
    let kappa_t = kappa(&r.kernel, 0.0, t, &r.grid)?;
    let mut b = Builder::new();
    b.check("normalization", est.mass_ok(), format!("mass {:.6}", est.mass));
    b.metric("mass", est.mass);
    b.metric("kappa_t", kappa_t);
    b.metric("eta_t", eta(&r.kernel, t, &r.grid)?);
    let fit = match tail_fit(&est, &r.z0, r.kernel.rho(), eps * kappa_t) {
        Ok(f) => {
            b.check("tail_form", f.slope > 0.0 && f.r2 >= cfg.thresholds.tail_r2, format!("slope {:.5}, r2 {:.5}, {} points", f.slope, f.r2, f.window));
            b.metric("tail_slope", f.slope);
            b.metric("tail_r2", f.r2);
            to_value(&f)
        }
        Err(e) => {
            b.check("tail_form", false, e.to_string());
            Value::Null
        }
    };
    b.file("density.csv", density_csv(&est));
    let results = json!({
        "t": t, "eps": eps, "bandwidth": est.bandwidth, "mass": est.mass, "n_paths": est.n_paths, "tail_fit": fit,
    });
    Ok(b.finish(cfg, r, hash, None, results))
}

fn tails(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let vf = vf_of(r);
    let t_node = terminal_node(cfg, &r.grid)?;
    let t = r.grid.nodes()[t_node];
    let eps = cfg.eps[0];
    let sim = simulate(&r.kernel, &r.grid, vf, &r.z0, eps, t_node, cfg.n_paths, cfg.seed)?;
    let kappa_t = kappa(&r.kernel, 0.0, t, &r.grid)?;
    let rep = tail_probability_check(&sim.sup_dev, &cfg.levels, r.kernel.rho(), eps * kappa_t);
    let mut b = Builder::new();
    match &rep.fit {
        Some(f) => {
            b.check("sup_tail_form", f.slope > 0.0 && f.r2 >= cfg.thresholds.tail_r2, format!("slope {:.5}, r2 {:.5}, {} levels", f.slope, f.r2, f.window));
            b.metric("tail_slope", f.slope);
            b.metric("tail_r2", f.r2);
        }
        None => b.check("sup_tail_form", false, "no level inside the reliable window"),
    }
    b.metric("kappa_t", kappa_t);
    let mut csv = String::from("level,exceedance,se\n");
    for i in 0..rep.levels.len() {
        csv.push_str(&format!("{},{},{}\n", rep.levels[i], rep.exceedance[i], rep.se[i]));
    }
    b.file("tails.csv", csv.into_bytes());
    Ok(b.finish(cfg, r, hash, None, json!({ "t": t, "eps": eps, "report": to_value(&rep) })))
}

fn varadhan(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let vf = vf_of(r);
    let rate_cfg = cfg.rate.clone().unwrap_or(RateConfig { seed: cfg.seed, ..Default::default() });
    let mut b = Builder::new();
    let mut results = Vec::new();
    let mut csv = String::from("target,eps,value,p_hat,se,score,above_floor\n");
    for (i, y) in cfg.y.iter().enumerate() {
        let rate = match rate_function(y, &r.kernel, vf, &r.z0, &r.grid, &rate_cfg) {
            Ok(rate) => rate,
            Err(CoreError::DegenerateMalliavin(det)) => {
                b.check(format!("det_gamma[{i}]"), false, format!("deterministic Malliavin matrix is degenerate: det = {det:e}"));
                continue;
            }
            Err(e @ CoreError::ResidualNotMet { .. }) => {
                b.check(format!("rate_residual[{i}]"), false, e.to_string());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        b.check(format!("rate_residual[{i}]"), rate.residual <= rate_cfg.tol, format!("{:e}", rate.residual));
        b.check(format!("det_gamma[{i}]"), rate.det_gamma > 0.0, format!("{:e}", rate.det_gamma));
        b.metric(format!("d2[{i}]"), rate.d2);
        let curve = varadhan_curve(y, &r.kernel, vf, &r.z0, &r.grid, &cfg.eps, cfg.n_paths, cfg.seed)?;
        for p in &curve {
            csv.push_str(&format!("{i},{},{},{},{},{},{}\n", p.eps, p.value, p.p_hat, p.se, p.score, p.above_floor));
        }
        let last = curve.last().expect("at least three eps");
        b.check(
            format!("noise_floor[{i}]"),
            last.above_floor,
            format!("n p_hat h = {:.2} at eps = {} (floor {})", last.score, last.eps, density::NOISE_FLOOR),
        );
        let sweep = VaradhanSweep::from_curve(y, rate.d2, curve)?;
        b.check(
            format!("varadhan_limit[{i}]"),
            sweep.gap.abs() <= cfg.thresholds.varadhan_gap,
            format!("limit {:.4} vs -d2 = {:.4}, gap {:.4}", sweep.limit, -rate.d2, sweep.gap),
        );
        b.metric(format!("limit[{i}]"), sweep.limit);
        b.metric(format!("gap[{i}]"), sweep.gap);
        results.push(json!({ "rate": to_value(&rate), "sweep": to_value(&sweep) }));
    }
    b.file("varadhan.csv", csv.into_bytes());
    Ok(b.finish(cfg, r, hash, None, json!({ "targets": results })))
}

fn audit_interpolation(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let audit = interpolation_audit(&r.kernel, &r.grid, cfg.n_functions, cfg.seed)?;
    let mut b = Builder::new();
    let total = audit.draws.len();
    b.check("lower_bound_chain", audit.chain_passes == total, format!("{}/{} draws, worst violation {:e}", audit.chain_passes, total, audit.worst_chain_violation));
    b.check("sup_interpolation", audit.interp_passes == total, format!("{}/{} draws, worst ratio {:.4}", audit.interp_passes, total, audit.worst_interp_ratio));
    b.metric("c_X", audit.c_x);
    b.metric("alpha", audit.alpha);
    b.metric("max_c2_ratio", audit.max_c2_ratio);
    b.metric("worst_interp_ratio", audit.worst_interp_ratio);
    let mut csv = String::from("index,degree,t,h_norm_sq,stieltjes,min_bound,sup,holder,c2_ratio,interp_ratio\n");
    for d in &audit.draws {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            d.index, d.degree, d.t, d.h_norm_sq, d.stieltjes, d.min_bound, d.sup, d.holder, d.c2_ratio, d.interp_ratio
        ));
    }
    b.file("audit.csv", csv.into_bytes());
    Ok(b.finish(cfg, r, hash, None, to_value(&audit)))
}

/// Random Cameron-Martin direction with atoms on `m` equispaced grid nodes.
pub fn random_direction(k: &CovKernel, d: usize, m: usize, seed: u64, index: u64) -> gaussrde::Result<CMElement> {
    let mut g = rng::stream(seed, index, 1);
    let nodes: Vec<f64> = (1..=m).map(|a| k.horizon() * a as f64 / m as f64).collect();
    let coeffs = (0..d)
        .map(|_| {
            let mut c = vec![0.0; m];
            rng::fill_normal(&mut g, &mut c);
            c
        })
        .collect();
    CMElement::new(k, nodes, coeffs)
}

fn audit_malliavin(cfg: &RunConfig, r: &Resolved, hash: &str) -> Result<Outcome, RunError> {
    let vf = vf_of(r);
    let d = vf.driver_dim();
    let grid = &r.grid;
    let n = grid.n();
    let sampler = PathSampler::new(&r.kernel, grid, d, cfg.seed)?;
    let gram = sampler.gram();
    let q = gram.cell_cov();
    let id = r.kernel.id();
    let mut b = Builder::new();

    let mut psd_fail = 0;
    let mut worst_asym = 0.0f64;
    for p in 0..cfg.n_paths as u64 {
        let rp = RoughPath2::lift(grid, d, &sampler.sample_path(p))?;
        let flow = rde::solve(&rp, vf, &r.z0, 1.0)?;
        let m = malliavin_matrix_with(&flow, vf, &q, n, &id)?;
        worst_asym = worst_asym.max(m.asymmetry() / m.trace().abs().max(f64::MIN_POSITIVE));
        if !m.is_psd() {
            psd_fail += 1;
        }
    }
    b.check("gamma_symmetric_psd", psd_fail == 0, format!("{psd_fail} of {} paths fail, worst relative asymmetry {worst_asym:e}", cfg.n_paths));

    let tau = 1e-4;
    let tol = f64::max(cfg.thresholds.oracle_abs, 3.0 * tau);
    let pairs = cfg.n_paths.min(20);
    let atoms = n.min(8);
    let mut worst = 0.0f64;
    for p in 0..pairs as u64 {
        let path = sampler.sample_path(p);
        let rp = RoughPath2::lift(grid, d, &path)?;
        let flow = rde::solve(&rp, vf, &r.z0, 1.0)?;
        let h = random_direction(&r.kernel, d, atoms, cfg.seed, p)?;
        let fd = pathwise_derivative(grid, &path, vf, &r.z0, 1.0, &h, tau, n)?;
        let an = kernel_directional_derivative(&flow, vf, gram, &h, n)?;
        for (a, c) in fd.iter().zip(&an) {
            worst = worst.max((a - c).abs());
        }
    }
    b.check("pathwise_oracle", worst <= tol, format!("worst |fd - kernel| = {worst:e} over {pairs} pairs (tol {tol:e})"));
    b.metric("oracle_worst", worst);

    let scaling = if n.is_multiple_of(4) { Some(inverse_moment_scaling(&r.kernel, vf, &r.z0, grid, cfg.n_paths, cfg.seed)?) } else { None };
    if let Some(s) = &scaling {
        let spread = s.spread.iter().fold(0.0f64, |a, &x| a.max(x));
        b.check("inverse_moment_scaling", spread <= cfg.thresholds.inverse_moment_spread, format!("spreads {:?}", s.spread));
        b.metric("inverse_moment_spread", spread);
    }
    Ok(b.finish(cfg, r, hash, None, json!({ "oracle_worst": worst, "oracle_pairs": pairs, "psd_failures": psd_fail, "inverse_moments": to_value(&scaling) })))
}
