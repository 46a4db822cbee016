//! Library side of the `gaussrde` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ConfigError, Experiment, RunConfig};
pub use experiments::{Check, Metric, Outcome, Report, RunError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_GATE: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

/// Result of one invocation: exit code, the report if one was produced, and a message for stderr.
#[derive(Debug)]
pub struct Finished {
    pub code: i32,
    pub report: Option<Report>,
    pub message: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_outputs(out: &Path, outcome: &Outcome) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::new();
    let report = serde_json::to_vec_pretty(&outcome.report)?;
    let all = std::iter::once(("report.json".to_string(), report)).chain(outcome.files.iter().cloned());
    for (name, bytes) in all {
        fs::write(out.join(&name), &bytes).with_context(|| format!("writing {name}"))?;
        files.push(FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, name });
    }
    let r = &outcome.report;
    let manifest = Manifest {
        tool: r.tool.clone(),
        version: r.version.clone(),
        experiment: r.experiment.clone(),
        config_sha256: r.config_sha256.clone(),
        seed: r.seed,
        files,
    };
    fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Parses, validates and runs a configuration, writing results under `out`
/// (or the config's `output` field, or the current directory).
pub fn execute(config_text: &str, out: Option<&Path>) -> Finished {
    let hash = sha256_hex(config_text.as_bytes());
    let cfg = match RunConfig::parse(config_text) {
        Ok(c) => c,
        Err(e) => return Finished { code: EXIT_SCHEMA, report: None, message: e.to_string() },
    };
    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => return Finished { code: EXIT_SCHEMA, report: None, message: e.to_string() },
    };
    let out_dir: PathBuf = out.map(Path::to_path_buf).or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    log::info!("running {} on {} with N = {}", cfg.experiment.name(), resolved.kernel.id(), resolved.grid.n());
    let (code, outcome) = match experiments::run(&cfg, &resolved, &hash) {
        Ok(o) => (if o.report.pass { EXIT_PASS } else { EXIT_FAIL }, o),
        Err(RunError::Gate(o)) => (EXIT_GATE, *o),
        Err(RunError::Runtime(e)) => return Finished { code: EXIT_FAIL, report: None, message: format!("{e:#}") },
    };
    if let Err(e) = write_outputs(&out_dir, &outcome) {
        return Finished { code: EXIT_FAIL, report: Some(outcome.report), message: format!("{e:#}") };
    }
    let message = match (&outcome.report.gate, code) {
        (Some(g), _) => format!("refused: {g}"),
        (None, EXIT_PASS) => format!("{}: pass", outcome.report.experiment),
        _ => {
            let failed: Vec<_> = outcome.report.checks.iter().filter(|c| !c.pass).map(|c| format!("{} ({})", c.name, c.detail)).collect();
            format!("{}: fail: {}", outcome.report.experiment, failed.join("; "))
        }
    };
    Finished { code, report: Some(outcome.report), message }
}

/// Runs [`execute`] inside a dedicated thread pool of `workers` threads.
pub fn execute_with_workers(config_text: &str, out: Option<&Path>, workers: usize) -> Finished {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| execute(config_text, out)),
        Err(e) => Finished { code: EXIT_FAIL, report: None, message: e.to_string() },
    }
}

/// Re-reads an output directory, checks file hashes against the manifest and
/// returns the stored report. Missing or unreadable manifests map to exit code 2.
pub fn load_report(dir: &Path) -> Result<(Manifest, Report), (i32, String)> {
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| (EXIT_SCHEMA, format!("no manifest in {}: {e}", dir.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| (EXIT_SCHEMA, format!("malformed manifest: {e}")))?;
    for f in &manifest.files {
        let bytes = fs::read(dir.join(&f.name)).map_err(|e| (EXIT_FAIL, format!("{}: {e}", f.name)))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err((EXIT_FAIL, format!("{} does not match its manifest hash", f.name)));
        }
    }
    let text = fs::read_to_string(dir.join("report.json")).map_err(|e| (EXIT_SCHEMA, format!("no report: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| (EXIT_SCHEMA, format!("malformed report: {e}")))?;
    let report = report_from_value(value).map_err(|e| (EXIT_SCHEMA, e))?;
    Ok((manifest, report))
}

fn report_from_value(v: serde_json::Value) -> Result<Report, String> {
    let get = |k: &str| v.get(k).cloned().ok_or_else(|| format!("report lacks {k}"));
    let s = |k: &str| -> Result<String, String> { get(k)?.as_str().map(str::to_string).ok_or_else(|| format!("{k} is not a string")) };
    let checks: Vec<serde_json::Value> = serde_json::from_value(get("checks")?).map_err(|e| e.to_string())?;
    let summary: Vec<serde_json::Value> = serde_json::from_value(get("summary")?).map_err(|e| e.to_string())?;
    Ok(Report {
        tool: s("tool")?,
        version: s("version")?,
        experiment: s("experiment")?,
        kernel: s("kernel")?,
        config_sha256: s("config_sha256")?,
        seed: get("seed")?.as_u64().ok_or("seed is not an integer")?,
        pass: get("pass")?.as_bool().ok_or("pass is not a bool")?,
        gate: v.get("gate").and_then(|g| g.as_str()).map(str::to_string),
        checks: checks
            .into_iter()
            .map(|c| Check {
                name: c["name"].as_str().unwrap_or_default().into(),
                pass: c["pass"].as_bool().unwrap_or(false),
                detail: c["detail"].as_str().unwrap_or_default().into(),
            })
            .collect(),
        summary: summary.into_iter().map(|m| Metric { name: m["name"].as_str().unwrap_or_default().into(), value: m["value"].as_f64().unwrap_or(f64::NAN) }).collect(),
        results: get("results")?,
    })
}

/// Human-readable summary of a report.
pub fn render(report: &Report) -> String {
    let mut s = format!("{} {} on {} (seed {})\n", report.tool, report.experiment, report.kernel, report.seed);
    if let Some(g) = &report.gate {
        s.push_str(&format!("refused: {g}\n"));
    }
    for c in &report.checks {
        s.push_str(&format!("  [{}] {}: {}\n", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail));
    }
    for m in &report.summary {
        s.push_str(&format!("  {} = {:.6e}\n", m.name, m.value));
    }
    s.push_str(if report.pass { "overall: pass\n" } else { "overall: FAIL\n" });
    s
}

/// Example configurations shipped with `list-fixtures`.
pub fn fixtures() -> Vec<(&'static str, serde_json::Value)> {
    use serde_json::json;
    vec![
        ("fbm-hypotheses", json!({"experiment": "hypotheses", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 256}})),
        ("fbm07-hypotheses", json!({"experiment": "hypotheses", "kernel": {"family": "fbm", "H": 0.7, "T": 1.0}, "grid": {"N": 128}})),
        (
            "bounded-density",
            json!({"experiment": "density", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 128},
                   "vf": {"name": "bounded_nonlinear", "dim": 1}, "z0": [0.0], "n_paths": 20000, "seed": 7}),
        ),
        (
            "bounded-tails",
            json!({"experiment": "tails", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 128},
                   "vf": {"name": "bounded_nonlinear", "dim": 1}, "z0": [0.0], "n_paths": 20000, "seed": 7,
                   "levels": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]}),
        ),
        (
            "geometric-varadhan",
            json!({"experiment": "varadhan", "kernel": {"family": "fbm", "H": 0.5, "T": 1.0}, "grid": {"N": 128},
                   "vf": {"name": "scalar_linear", "sigma": 1.0}, "z0": [1.0], "y": [[1.6487212707001282]],
                   "eps": [0.5, 0.35, 0.25], "n_paths": 20000, "seed": 3}),
        ),
        ("fbm-audit", json!({"experiment": "audit-interpolation", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 128}, "n_functions": 100})),
        (
            "rotation-malliavin",
            json!({"experiment": "audit-malliavin", "kernel": {"family": "fbm", "H": 0.4, "T": 1.0}, "grid": {"N": 512},
                   "vf": {"name": "rotation_mix"}, "z0": [0.3, -0.2], "n_paths": 400, "seed": 1}),
        ),
    ]
}
