//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 3 7`.

use std::time::Instant;

use gaussrde::covariance::{check_hypotheses, eta, examples, mixed_variation, Rect};
use gaussrde::density::{self, first_variation_samples, kde, rate_function, simulate, tail_fit, varadhan_curve, Bandwidth, RateConfig, VaradhanSweep, NOISE_FLOOR};
use gaussrde::malliavin::{interpolation_audit, kernel_directional_derivative, malliavin_matrix, pathwise_derivative};
use gaussrde::rde::{self, BoundedNonlinear, Identity, Scheme, ScalarLinear, VectorField};
use gaussrde::{CovKernel, KernelSpec, PathSampler, RoughPath2, TimeGrid};
use gaussrde_cli::experiments::random_direction;

type Check = anyhow::Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Check);

fn kernel(json: &str) -> CovKernel {
    CovKernel::new(serde_json::from_str(json).expect("valid spec")).expect("valid kernel")
}

fn fbm(h: f64) -> CovKernel {
    CovKernel::new(KernelSpec::fbm(h, 1.0)).unwrap()
}

fn grid(n: usize) -> TimeGrid {
    TimeGrid::uniform(1.0, n).unwrap()
}

fn c1_hypothesis_gates() -> Check {
    let g = grid(128);
    let mut ok = true;
    let mut notes = Vec::new();
    for h in [0.35, 0.4, 0.45, 0.5] {
        let start = Instant::now();
        let r = check_hypotheses(&fbm(h), &g, None)?;
        let secs = start.elapsed().as_secs_f64();
        let good = r.negative_correlation.pass && r.diagonal_dominance.pass && r.c_x_estimate > 0.0 && (r.alpha_estimate - 2.0 * h).abs() <= 0.15 && secs < 30.0;
        ok &= good;
        notes.push(format!("H={h}: c_X={:.3} alpha={:.3} {:.1}s", r.c_x_estimate, r.alpha_estimate, secs));
    }
    let start = Instant::now();
    let r = check_hypotheses(&fbm(0.7), &g, None)?;
    let secs = start.elapsed().as_secs_f64();
    // E[(B_1/2 - B_0)(B_1 - B_1/2)] = (1 - 2^{1 - 2H}) / 2.
    let closed = 0.5 * (1.0 - 2f64.powf(1.0 - 1.4));
    let nc = &r.negative_correlation;
    let w = nc.witness.unwrap_or([f64::NAN; 4]);
    let rect = fbm(0.7).rect_increment(w[0], w[1], w[2], w[3])?;
    let good = !nc.pass && rect > 0.0 && (nc.worst_violation - closed).abs() < 1e-10 && secs < 30.0;
    ok &= good;
    notes.push(format!("H=0.7 fails at {w:?}: {:.6} vs closed form {closed:.6}", nc.worst_violation));
    Ok((ok, notes.join("; ")))
}

fn c2_brownian_closed_forms() -> Check {
    let b = fbm(0.5);
    let mut worst: f64 = 0.0;
    for n in [64, 512] {
        let g = grid(n);
        for t in [0.25, 0.5, 1.0] {
            let v = mixed_variation(&b, Rect::square(0.0, t), 1.0, 1.0, &g)?.value;
            worst = worst.max((v - t).abs()).max((eta(&b, t, &g)? - 1.0).abs());
        }
    }
    let mut bif: f64 = 0.0;
    for h in [0.3, 0.4, 0.45] {
        let a = kernel(&format!(r#"{{"family":"bifbm","H":{h},"K":1.0,"T":1.0}}"#));
        let f = fbm(h);
        for i in 1..=64 {
            for j in 1..=64 {
                let (s, t) = (i as f64 / 64.0, j as f64 / 64.0);
                bif = bif.max((a.eval(s, t)? - f.eval(s, t)?).abs());
            }
        }
    }
    Ok((worst <= 1e-6 && bif <= 1e-12, format!("max |V - t|, |eta - 1| = {worst:.2e}; max |bifbm(H,1) - fbm(H)| = {bif:.2e}")))
}

fn c3_rough_paths() -> Check {
    let start = Instant::now();
    let k = fbm(0.4);
    let g = grid(256);
    let sampler = PathSampler::new(&k, &g, 2, 31)?;
    let mut worst_rel: f64 = 0.0;
    for p in 0..100 {
        let path = sampler.sample_path(p);
        let fine = RoughPath2::lift(&g, 2, &path)?;
        let coarse = fine.subsample(4)?;
        for rp in [&coarse, &fine.subsample(2)?] {
            let v = rp.values();
            let n = rp.grid().n();
            let mut scale: f64 = 0.0;
            for a in 0..=n {
                for b in a..=n {
                    scale = scale.max((0..2).map(|j| (v[b * 2 + j] - v[a * 2 + j]).powi(2)).sum());
                }
            }
            worst_rel = worst_rel.max(rp.chen_defect() / scale.max(f64::MIN_POSITIVE));
        }
    }

    let b = fbm(0.5);
    let vf = ScalarLinear { sigma: 1.0 };
    let eps = 0.5;
    let paths = 50;
    let fine_grid = grid(512);
    let s = PathSampler::new(&b, &fine_grid, 1, 32)?;
    let mut errs = [0.0; 4];
    for p in 0..paths {
        let fine = RoughPath2::lift(&fine_grid, 1, &s.sample_path(p))?;
        let exact = (eps * fine.values()[512]).exp();
        for (e, stride) in errs.iter_mut().zip([8, 4, 2, 1]) {
            let z = rde::solve_terminal(&fine.subsample(stride)?, &vf, &[1.0], eps, Scheme::LogOde)?[0];
            *e += (z - exact).abs() / exact / paths as f64;
        }
    }
    let x: Vec<f64> = [64.0f64, 128.0, 256.0, 512.0].iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 4.0, y.iter().sum::<f64>() / 4.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    let order = -slope;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst_rel <= 1e-13 && order >= 1.5 && secs < 60.0,
        format!("Chen defect / scale <= {worst_rel:.2e} on 100 paths; order {order:.2} (errors {:.1e} .. {:.1e}); {secs:.1}s", errs[0], errs[3]),
    ))
}

fn c4_malliavin_oracle() -> Check {
    let start = Instant::now();
    let n = 512;
    let g = grid(n);
    let tau = 1e-4;
    let tol = f64::max(1e-4, 3.0 * tau);
    let fields: Vec<(Box<dyn VectorField>, Vec<f64>)> = vec![
        (Box::new(Identity { n: 1 }), vec![0.0]),
        (Box::new(ScalarLinear { sigma: 1.0 }), vec![1.0]),
        (Box::new(BoundedNonlinear { n: 1 }), vec![0.2]),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (kname, k) in [("bm", fbm(0.5)), ("fbm0.4", fbm(0.4))] {
        let sampler = PathSampler::new(&k, &g, 1, 41)?;
        for (vf, z0) in &fields {
            let mut worst: f64 = 0.0;
            for p in 0..50 {
                let path = sampler.sample_path(p);
                let flow = rde::solve(&RoughPath2::lift(&g, 1, &path)?, vf.as_ref(), z0, 1.0)?;
                let h = random_direction(&k, 1, 8, 42, p)?;
                let fd = pathwise_derivative(&g, &path, vf.as_ref(), z0, 1.0, &h, tau, n)?;
                let an = kernel_directional_derivative(&flow, vf.as_ref(), sampler.gram(), &h, n)?;
                worst = worst.max((fd[0] - an[0]).abs());
            }
            ok &= worst <= tol;
            notes.push(format!("{kname}/{} {worst:.1e}", vf.name()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((ok && secs < 120.0, format!("worst |fd - pairing| over 50 pairs (tol {tol:.0e}): {}; {secs:.1}s", notes.join(", "))))
}

fn c5_malliavin_closed_forms() -> Check {
    let g = grid(512);
    let mut kernels = examples();
    kernels.push(fbm(0.5));
    let vf = Identity { n: 2 };
    let mut add: f64 = 0.0;
    for k in &kernels {
        let gram = k.gram(&g)?;
        let s = PathSampler::new(k, &g, 2, 51)?;
        for p in 0..3 {
            let flow = rde::solve(&RoughPath2::lift(&g, 2, &s.sample_path(p))?, &vf, &[0.0, 0.0], 1.0)?;
            for t in [128, 256, 512] {
                let m = malliavin_matrix(&flow, &vf, &gram, t)?;
                let s2 = k.sigma_sq0(g.nodes()[t])?;
                let e = [m.gamma[0] - s2, m.gamma[1], m.gamma[2], m.gamma[3] - s2].iter().fold(0.0f64, |a, x| a.max(x.abs()));
                add = add.max(e);
            }
        }
    }
    let k = fbm(0.4);
    let gram = k.gram(&g)?;
    let s = PathSampler::new(&k, &g, 1, 52)?;
    let sigma = 0.6;
    let geo_vf = ScalarLinear { sigma };
    let mut geo: f64 = 0.0;
    for p in 0..20 {
        let flow = rde::solve(&RoughPath2::lift(&g, 1, &s.sample_path(p))?, &geo_vf, &[1.0], 1.0)?;
        for t in [64, 256, 512] {
            let m = malliavin_matrix(&flow, &geo_vf, &gram, t)?;
            let z = flow.z(t)[0];
            let want = sigma * sigma * z * z * k.sigma_sq0(g.nodes()[t])?;
            geo = geo.max((m.gamma[0] - want).abs() / want);
        }
    }
    Ok((add <= 1e-8 && geo <= 1e-6, format!("additive max error {add:.1e} over {} kernels; geometric max relative error {geo:.1e} over 20 paths", kernels.len())))
}

fn c6_interpolation() -> Check {
    let g = grid(128);
    // F(x) = x^0.8 + (1 - e^{-2x}) / 2: concave, increasing, comparable to x^0.8.
    let stationary = kernel(r#"{"family":"stationary","T":1.0,"profile":[{"kind":"power","scale":1.0,"exponent":0.8},{"kind":"saturating_exp","scale":0.5,"rate":2.0}]}"#);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, k) in [("fbm0.4", fbm(0.4)), ("stationary", stationary)] {
        let a = interpolation_audit(&k, &g, 100, 61)?;
        let total = a.draws.len();
        ok &= a.chain_passes == total && a.interp_passes == total;
        notes.push(format!("{name}: chain {}/{total}, interpolation {}/{total} (c_X {:.3}, alpha {:.3}, worst ratio {:.3})", a.chain_passes, a.interp_passes, a.c_x, a.alpha, a.worst_interp_ratio));
    }
    Ok((ok, notes.join("; ")))
}

fn density_axes(samples: &[f64]) -> Vec<Vec<f64>> {
    let h = density::silverman(samples, 1)[0];
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    vec![density::linspace(lo - 3.0 * h, hi + 3.0 * h, 101)]
}

fn c7_tail_form() -> Check {
    let start = Instant::now();
    let n_paths = 200_000;
    let g = grid(128);
    let k = fbm(0.4);
    let sim = simulate(&k, &g, &BoundedNonlinear { n: 1 }, &[0.0], 1.0, 128, n_paths, 71)?;
    let est = kde(&sim.terminal, 1, &density_axes(&sim.terminal), &Bandwidth::Silverman, 1.0)?;
    let kappa = gaussrde::covariance::kappa(&k, 0.0, 1.0, &g)?;
    let fit = tail_fit(&est, &[0.0], k.rho(), kappa)?;

    let b = fbm(0.5);
    let sim_b = simulate(&b, &g, &Identity { n: 1 }, &[0.0], 1.0, 128, n_paths, 72)?;
    let est_b = kde(&sim_b.terminal, 1, &[density::linspace(-4.0, 4.0, 81)], &Bandwidth::Silverman, 1.0)?;
    let ctrl = tail_fit(&est_b, &[0.0], b.rho(), 1.0)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = fit.slope > 0.0 && fit.r2 >= 0.9 && (ctrl.slope - 0.5).abs() <= 0.025 && secs < 600.0;
    Ok((
        ok,
        format!(
            "bounded/fbm0.4: slope {:.4}, r2 {:.4} over {} points; Brownian control slope {:.4} (r2 {:.4}); {secs:.1}s",
            fit.slope, fit.r2, fit.window, ctrl.slope, ctrl.r2
        ),
    ))
}

fn c8_first_variation() -> Check {
    let g = grid(128);
    let k = fbm(0.4);
    let vf = BoundedNonlinear { n: 2 };
    let mut ok = true;
    let mut notes = Vec::new();
    for i in 0..2 {
        let h = random_direction(&k, 2, 8, 81, i)?.scale(0.5);
        let fv = first_variation_samples(&h, &k, &vf, &[0.1, -0.2], &g, 100_000, 82 + i)?;
        ok &= fv.max_cov_z <= 5.0;
        notes.push(format!("h{i}: max cov z {:.2}, max mean z {:.2}", fv.max_cov_z, fv.max_mean_z));
    }
    Ok((ok, notes.join("; ")))
}

fn c9_rate_function() -> Check {
    let g = grid(64);
    let cfg = RateConfig { seed: 91, ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut resid: f64 = 0.0;
    let mut det_ok = true;
    let z0 = 0.5;
    for k in [fbm(0.4), fbm(0.5)] {
        let s1 = k.sigma_sq0(1.0)?;
        for y in [-0.5, 1.5, 2.5] {
            let r = rate_function(&[y], &k, &Identity { n: 1 }, &[z0], &g, &cfg)?;
            worst = worst.max((r.d2 - (y - z0) * (y - z0) / (2.0 * s1)).abs());
            resid = resid.max(r.residual);
            det_ok &= r.det_gamma > 0.0;
        }
    }
    let mut geo: f64 = 0.0;
    for k in [fbm(0.5), fbm(0.4)] {
        let s1 = k.sigma_sq0(1.0)?;
        for c in [0.7f64, -0.4] {
            let r = rate_function(&[2.0 * c.exp()], &k, &ScalarLinear { sigma: 1.0 }, &[2.0], &g, &cfg)?;
            geo = geo.max((r.d2 - c * c / (2.0 * s1)).abs());
            resid = resid.max(r.residual);
            det_ok &= r.det_gamma > 0.0;
        }
    }
    Ok((
        worst <= 1e-3 && geo <= 1e-3 && resid <= 1e-6 && det_ok,
        format!("additive max |d2 error| {worst:.1e}; geometric {geo:.1e}; max residual {resid:.1e}; det gamma > 0: {det_ok}"),
    ))
}

fn c10_varadhan() -> Check {
    let start = Instant::now();
    let g = grid(128);
    let b = fbm(0.5);
    let eps = [0.5, 0.35, 0.25];
    let n_paths = 200_000;

    // Additive: y - z0 = 1, d2 = 1/2.
    let curve = varadhan_curve(&[1.0], &b, &Identity { n: 1 }, &[0.0], &g, &eps, n_paths, 101)?;
    let floor_ok = curve.iter().all(|p| p.above_floor);
    let scores: Vec<String> = curve.iter().map(|p| format!("{:.1}", p.score)).collect();
    let add = VaradhanSweep::from_curve(&[1.0], 0.5, curve)?;
    let add_ok = floor_ok && add.gap.abs() <= 0.05;

    // Geometric: log(y / z0) = 1/2.
    let y = [0.5f64.exp()];
    let vf = ScalarLinear { sigma: 1.0 };
    let rate = rate_function(&y, &b, &vf, &[1.0], &g, &RateConfig { seed: 102, ..Default::default() })?;
    let curve = varadhan_curve(&y, &b, &vf, &[1.0], &g, &eps, n_paths, 103)?;
    let geo_floor = curve.iter().all(|p| p.above_floor);
    let geo = VaradhanSweep::from_curve(&y, rate.d2, curve)?;
    let geo_ok = geo_floor && geo.gap.abs() <= 0.1;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        add_ok && geo_ok && secs < 900.0,
        format!(
            "additive: limit {:.4} vs -0.5 (gap {:+.4}), n p h = [{}] vs floor {NOISE_FLOOR} -> {}; geometric: limit {:.4} vs -{:.4} (gap {:+.4}) -> {}; {secs:.1}s",
            add.limit,
            add.gap,
            scores.join(", "),
            if add_ok { "ok" } else { "FAIL" },
            geo.limit,
            rate.d2,
            geo.gap,
            if geo_ok { "ok" } else { "FAIL" },
        ),
    ))
}

fn c11_determinism() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, cfg) in gaussrde_cli::fixtures() {
        let text = cfg.to_string();
        let mut outputs = Vec::new();
        for w in [1, 4, 16] {
            let dir = tempfile::tempdir()?;
            let done = gaussrde_cli::execute_with_workers(&text, Some(dir.path()), w);
            if done.report.is_none() {
                anyhow::bail!("{name}: {}", done.message);
            }
            outputs.push(std::fs::read(dir.path().join("report.json"))?);
        }
        let same = outputs.windows(2).all(|p| p[0] == p[1]);
        ok &= same;
        if !same {
            notes.push(format!("{name} differs"));
        }
    }
    let n = gaussrde_cli::fixtures().len();
    Ok((ok, if ok { format!("report.json identical for 1, 4, 16 workers on all {n} fixtures") } else { notes.join(", ") }))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("hypothesis gates", c1_hypothesis_gates),
        ("Brownian closed forms", c2_brownian_closed_forms),
        ("rough-path correctness", c3_rough_paths),
        ("Malliavin oracle equivalence", c4_malliavin_oracle),
        ("Malliavin matrix closed forms", c5_malliavin_closed_forms),
        ("interpolation audits", c6_interpolation),
        ("tail form", c7_tail_form),
        ("first-variation covariance", c8_first_variation),
        ("rate function closed forms", c9_rate_function),
        ("Varadhan sweep", c10_varadhan),
        ("determinism", c11_determinism),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {id:>2} [{}] {name} ({:.1}s): {detail}", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
