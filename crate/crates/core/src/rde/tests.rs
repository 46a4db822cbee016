use super::*;
use crate::covariance::{CovKernel, KernelSpec};
use crate::gaussian_path::PathSampler;

fn brownian(n: usize, d: usize, seed: u64, index: u64) -> RoughPath2 {
    let k = CovKernel::new(KernelSpec::brownian(1.0)).unwrap();
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let s = PathSampler::new(&k, &grid, d, seed).unwrap();
    RoughPath2::lift(&grid, d, &s.sample_path(index)).unwrap()
}

/// `V_0(z) = -z`, `V = 1` in one dimension.
struct Relax;

impl VectorField for Relax {
    fn name(&self) -> String {
        "relax".into()
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn driver_dim(&self) -> usize {
        1
    }
    fn drift(&self, z: &[f64], out: &mut [f64]) {
        out[0] = -z[0];
    }
    fn drift_jacobian(&self, _: &[f64], out: &mut [f64]) {
        out[0] = -1.0;
    }
    fn diffusion(&self, _: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn diffusion_jacobian(&self, _: usize, _: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion_hessian(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

/// `V = diag(1, 0)`.
struct Degenerate;

impl VectorField for Degenerate {
    fn name(&self) -> String {
        "degenerate".into()
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn driver_dim(&self) -> usize {
        2
    }
    fn drift(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn drift_jacobian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
    }
    fn diffusion_jacobian(&self, _: usize, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_hessian(&self, _: usize, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

fn fixtures() -> Vec<(Box<dyn VectorField>, Vec<f64>)> {
    vec![
        (VfSpec::Identity { dim: 2 }.build().unwrap(), vec![0.5, -1.0]),
        (VfSpec::ScalarLinear { sigma: 1.0 }.build().unwrap(), vec![1.0]),
        (VfSpec::RotationMix.build().unwrap(), vec![0.3, 0.2]),
        (VfSpec::BoundedNonlinear { dim: 1 }.build().unwrap(), vec![0.2]),
        (VfSpec::BoundedNonlinear { dim: 2 }.build().unwrap(), vec![0.2, -0.4]),
    ]
}

#[test]
fn additive_equation_is_exact() {
    let rp = brownian(256, 2, 1, 0);
    let vf = Identity { n: 2 };
    let z0 = [0.5, -1.0];
    let eps = 0.7;
    for scheme in [Scheme::LogOde, Scheme::Taylor2] {
        let flow = solve_with(&rp, &vf, &z0, eps, SolveOptions { scheme, jacobian: true }).unwrap();
        let xt = &rp.values()[256 * 2..];
        for i in 0..2 {
            assert!((flow.terminal()[i] - (z0[i] + eps * xt[i])).abs() < 1e-12);
        }
        assert_eq!(flow.z(0), &z0);
        assert_eq!(flow.j(0), &[1.0, 0.0, 0.0, 1.0]);
    }
}

fn geometric_errors(scheme: Scheme) -> Vec<f64> {
    let vf = ScalarLinear { sigma: 1.0 };
    let eps = 0.5;
    let mut errs = vec![0.0; 4];
    let paths = 20;
    for p in 0..paths {
        let fine = brownian(512, 1, 7, p);
        let exact = (eps * fine.values()[512]).exp();
        for (e, stride) in errs.iter_mut().zip([8, 4, 2, 1]) {
            let rp = fine.subsample(stride).unwrap();
            let z = solve_terminal(&rp, &vf, &[1.0], eps, scheme).unwrap()[0];
            *e += (z - exact).abs() / exact / paths as f64;
        }
    }
    errs
}

fn observed_order(errs: &[f64]) -> f64 {
    let x: Vec<f64> = [64.0f64, 128.0, 256.0, 512.0].iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    -crate::linalg::linear_fit(&x, &y).0
}

#[test]
fn geometric_solution_converges_at_order_two() {
    let errs = geometric_errors(Scheme::LogOde);
    let order = observed_order(&errs);
    assert!(order >= 1.5, "order {order}, errors {errs:?}");
    assert!(errs[3] < 1e-5);
}

#[test]
fn taylor_scheme_converges() {
    let errs = geometric_errors(Scheme::Taylor2);
    let order = observed_order(&errs);
    assert!(order > 0.7, "order {order}, errors {errs:?}");
    assert!(errs[3] < errs[0]);
}

#[test]
fn zero_noise_is_the_drift_ode() {
    let rp = brownian(128, 1, 3, 0);
    let flow = solve(&rp, &Relax, &[2.0], 0.0).unwrap();
    let exact = 2.0 * (-1.0f64).exp();
    assert!((flow.terminal()[0] - exact).abs() < (1.0 / 128.0f64).powi(2));
    assert!((flow.j(128)[0] - (-1.0f64).exp()).abs() < 1e-8);
}

fn shifted(rp: &RoughPath2, from: usize) -> RoughPath2 {
    let d = rp.dim();
    let t0 = rp.grid().nodes()[from];
    let nodes: Vec<f64> = rp.grid().nodes()[from..].iter().map(|t| t - t0).collect();
    let grid = TimeGrid::from_nodes(nodes).unwrap();
    RoughPath2::lift(&grid, d, &rp.values()[from * d..]).unwrap()
}

#[test]
fn jacobian_flow_property() {
    let rp = brownian(512, 2, 11, 0);
    let vf = BoundedNonlinear { n: 2 };
    let z0 = [0.2, -0.4];
    let eps = 0.8;
    let full = solve(&rp, &vf, &z0, eps).unwrap();
    for s in [64, 200, 384] {
        let tail = solve(&shifted(&rp, s), &vf, full.z(s), eps).unwrap();
        let composed = tail.j_matrix(512 - s) * full.j_matrix(s);
        let direct = full.j_matrix(512);
        assert!((composed - &direct).amax() <= 1e-6 * direct.amax());
        for i in 0..2 {
            assert!((tail.terminal()[i] - full.terminal()[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn inverse_jacobian_stays_consistent() {
    for (vf, z0) in fixtures() {
        let d = vf.driver_dim();
        for seed in 0..3 {
            let rp = brownian(512, d, seed, 0);
            let flow = solve(&rp, vf.as_ref(), &z0, 0.9).unwrap();
            assert!(flow.inverse_defect() <= 1e-8, "{} defect {}", vf.name(), flow.inverse_defect());
        }
    }
}

#[test]
fn eps_scaling_is_bitwise() {
    let rp = brownian(128, 2, 5, 0);
    let vf = RotationMix;
    let eps = 0.37;
    let scaled_path: Vec<f64> = rp.values().iter().map(|x| eps * x).collect();
    let relifted = RoughPath2::lift(rp.grid(), 2, &scaled_path).unwrap();
    let a = solve(&rp, &vf, &[0.1, 0.2], eps).unwrap();
    let b = solve(&relifted, &vf, &[0.1, 0.2], 1.0).unwrap();
    for i in 0..=128 {
        assert_eq!(a.z(i), b.z(i));
        assert_eq!(a.j(i), b.j(i));
    }
}

#[test]
fn jacobian_matches_finite_differences_with_area() {
    // Subsampling a 2D lift leaves Levy area on each coarse step.
    let rp = brownian(512, 2, 21, 0).subsample(8).unwrap();
    assert!(rp.step2(3)[1] != rp.step2(3)[2]);
    for (vf, z0) in fixtures().into_iter().filter(|(v, _)| v.state_dim() == 2) {
        let eps = 0.9;
        let flow = solve(&rp, vf.as_ref(), &z0, eps).unwrap();
        let h = 1e-6;
        for l in 0..2 {
            let mut zp = z0.clone();
            let mut zm = z0.clone();
            zp[l] += h;
            zm[l] -= h;
            let fp = solve_terminal(&rp, vf.as_ref(), &zp, eps, Scheme::LogOde).unwrap();
            let fm = solve_terminal(&rp, vf.as_ref(), &zm, eps, Scheme::LogOde).unwrap();
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((flow.j(64)[i * 2 + l] - fd).abs() < 1e-7, "{}", vf.name());
            }
        }
    }
}

#[test]
fn area_term_improves_coarse_solutions() {
    let vf = RotationMix;
    let z0 = [0.3, 0.2];
    let mut with_area = 0.0;
    let mut without = 0.0;
    for p in 0..10 {
        let fine = brownian(1024, 2, 31, p);
        let reference = solve_terminal(&fine, &vf, &z0, 1.0, Scheme::LogOde).unwrap();
        let coarse = fine.subsample(16).unwrap();
        let flat = RoughPath2::lift(coarse.grid(), 2, coarse.values()).unwrap();
        let a = solve_terminal(&coarse, &vf, &z0, 1.0, Scheme::LogOde).unwrap();
        let b = solve_terminal(&flat, &vf, &z0, 1.0, Scheme::LogOde).unwrap();
        let dist = |x: &[f64]| ((x[0] - reference[0]).powi(2) + (x[1] - reference[1]).powi(2)).sqrt();
        with_area += dist(&a);
        without += dist(&b);
    }
    assert!(with_area < 0.5 * without, "{with_area} vs {without}");
}

#[test]
fn blow_up_and_coarse_steps_are_reported() {
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    let drive: Vec<f64> = grid.nodes().iter().map(|t| 20.0 * t).collect();
    match solve_drive(&grid, &drive, &ScalarLinear { sigma: 1.0 }, &[1.0], true) {
        Err(Error::BlowUp { last_valid, norm }) => {
            assert!(last_valid < 512 && last_valid > 400);
            assert!(norm > BLOW_UP);
        }
        other => panic!("{other:?}"),
    }
    let jump: Vec<f64> = grid.nodes().iter().map(|&t| if t > 0.5 { 2.0 } else { 0.0 }).collect();
    let rp = RoughPath2::lift(&grid, 1, &jump).unwrap();
    assert!(matches!(solve(&rp, &Identity { n: 1 }, &[0.0], 1.0), Err(Error::StepTooCoarse { step: 256, .. })));
    assert!(matches!(solve(&rp, &RotationMix, &[0.0, 0.0], 1.0), Err(Error::DimensionMismatch(_))));
}

#[test]
fn skeleton_examples() {
    let k = CovKernel::new(KernelSpec::fbm(0.4, 1.0)).unwrap();
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let zero = CMElement::zero(&k, 1);
    let flow = solve_skeleton(&zero, &grid, &Identity { n: 1 }, &[0.3]).unwrap();
    assert!(flow.z.iter().all(|&z| z == 0.3));

    let h = CMElement::new(&k, vec![0.25, 0.6, 1.0], vec![vec![0.8, -0.3, 0.5]]).unwrap();
    let h1 = h.eval(1.0).unwrap()[0];
    let add = solve_skeleton(&h, &grid, &Identity { n: 1 }, &[0.3]).unwrap();
    assert!((add.terminal()[0] - (0.3 + h1)).abs() < 1e-12);
    let lin = solve_skeleton(&h, &grid, &ScalarLinear { sigma: 1.0 }, &[0.3]).unwrap();
    assert!((lin.terminal()[0] - 0.3 * h1.exp()).abs() < 1e-9);
    assert!((lin.j(64)[0] - h1.exp()).abs() < 1e-9);
    assert_eq!(lin.grid().n(), 64);
}

#[test]
fn ellipticity_examples() {
    let id = ellipticity_scan(&Identity { n: 2 }, &[0.0, 0.0], 50, 1).unwrap();
    assert!((id.lambda_hat - 1.0).abs() < 1e-14 && id.elliptic);
    let deg = ellipticity_scan(&Degenerate, &[0.0, 0.0], 50, 1).unwrap();
    assert!(deg.lambda_hat.abs() < 1e-14 && !deg.elliptic);

    let rep = ellipticity_scan(&RotationMix, &[0.0, 0.0], 1000, 2).unwrap();
    assert!(rep.lambda_hat > 0.0 && rep.lambda_hat < 1.0 && rep.elliptic);
    // Closed-form 2x2 eigenvalue as the oracle.
    let oracle = |x: &[f64]| {
        let mut v = [0.0; 4];
        RotationMix.diffusion(x, &mut v);
        let a = v[0] * v[0] + v[1] * v[1];
        let b = v[0] * v[2] + v[1] * v[3];
        let c = v[2] * v[2] + v[3] * v[3];
        0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
    };
    assert!((oracle(&rep.argmin) - rep.lambda_hat).abs() < 1e-12);
    let mut r = crate::rng::stream(99, 0, 0);
    use rand::Rng;
    for _ in 0..1000 {
        let x = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let lam = oracle(&x);
        assert!(lam >= RotationMix.elliptic_constant().unwrap() - 1e-12);
        let mut buf = [0.0; 4];
        assert!((min_gram_eigenvalue(&RotationMix, &x, &mut buf) - lam).abs() < 1e-12);
    }
}
