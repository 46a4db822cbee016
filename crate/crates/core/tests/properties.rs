use gaussrde::density::{kde, linspace, rate_function, richardson_limit, tail_fit, Bandwidth, DensityEstimate, RateConfig};
use gaussrde::malliavin::malliavin_matrix;
use gaussrde::rde::{self, VfSpec};
use gaussrde::{CovKernel, KernelSpec, PathSampler, RoughPath2, TimeGrid};
use proptest::prelude::*;

fn fixture(i: usize) -> (VfSpec, Vec<f64>) {
    match i % 4 {
        0 => (VfSpec::Identity { dim: 2 }, vec![0.5, -1.0]),
        1 => (VfSpec::ScalarLinear { sigma: 0.8 }, vec![1.0]),
        2 => (VfSpec::RotationMix, vec![0.3, 0.2]),
        _ => (VfSpec::BoundedNonlinear { dim: 2 }, vec![0.2, -0.4]),
    }
}

fn lift(h: f64, n: usize, d: usize, seed: u64) -> (CovKernel, RoughPath2) {
    let k = CovKernel::new(KernelSpec::fbm(h, 1.0)).unwrap();
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let s = PathSampler::new(&k, &grid, d, seed).unwrap();
    let rp = RoughPath2::lift(&grid, d, &s.sample_path(0)).unwrap();
    (k, rp)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn scaled_driver_gives_identical_solutions(seed in 0u64..1000, eps in 0.05f64..1.0, which in 0usize..4) {
        let (spec, z0) = fixture(which);
        let vf = spec.build().unwrap();
        let (_, rp) = lift(0.45, 128, vf.driver_dim(), seed);
        let a = rde::solve(&rp, vf.as_ref(), &z0, eps).unwrap();
        let b = rde::solve(&rp.scaled(eps), vf.as_ref(), &z0, 1.0).unwrap();
        for i in 0..=128 {
            prop_assert_eq!(a.z(i), b.z(i));
            prop_assert_eq!(a.j(i), b.j(i));
        }
    }

    #[test]
    fn inverse_jacobian_stays_consistent(seed in 0u64..1000, which in 0usize..4) {
        let (spec, z0) = fixture(which);
        let vf = spec.build().unwrap();
        let (_, rp) = lift(0.4, 256, vf.driver_dim(), seed);
        let flow = rde::solve(&rp, vf.as_ref(), &z0, 1.0).unwrap();
        prop_assert!(flow.inverse_defect() <= 1e-8);
    }

    #[test]
    fn malliavin_matrix_is_symmetric_psd(seed in 0u64..1000, which in 0usize..4, t in 8usize..=64) {
        let (spec, z0) = fixture(which);
        let vf = spec.build().unwrap();
        let (k, rp) = lift(0.4, 64, vf.driver_dim(), seed);
        let gram = k.gram(rp.grid()).unwrap();
        let flow = rde::solve(&rp, vf.as_ref(), &z0, 1.0).unwrap();
        let m = malliavin_matrix(&flow, vf.as_ref(), &gram, t).unwrap();
        prop_assert!(m.asymmetry() <= 1e-12 * m.trace().abs().max(1e-300));
        prop_assert!(m.is_psd());
    }

    #[test]
    fn kde_mass_is_close_to_one(seed in 0u64..1000, spread in 0.2f64..3.0) {
        let mut rng = gaussrde::rng::stream(seed, 0, 0);
        let mut x = vec![0.0; 2000];
        gaussrde::rng::fill_normal(&mut rng, &mut x);
        x.iter_mut().for_each(|v| *v *= spread);
        let axes = vec![linspace(-7.0 * spread, 7.0 * spread, 401)];
        let est = kde(&x, 1, &axes, &Bandwidth::Silverman, 1.0).unwrap();
        prop_assert!(est.mass_ok(), "{}", est.mass);
    }

    #[test]
    fn richardson_recovers_the_constant(a in -2.0f64..0.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let eps = [0.5, 0.35, 0.25];
        let v = eps.map(|e: f64| a + b * e * e + c * e * e * e.ln());
        prop_assert!((richardson_limit(eps, v) - a).abs() < 1e-9);
    }

    #[test]
    fn tail_fit_ignores_normalization(scale in 0.1f64..10.0, s2 in 0.3f64..3.0) {
        let axis = linspace(-4.0, 4.0, 81);
        let values: Vec<f64> = axis.iter().map(|y| (-y * y / (2.0 * s2)).exp()).collect();
        let est = DensityEstimate { axes: vec![axis], se: vec![1e-12; 81], values: values.clone(), bandwidth: vec![0.1], n_paths: 1, t: 1.0, mass: 1.0 };
        let scaled = DensityEstimate { values: values.iter().map(|v| v * scale).collect(), ..est.clone() };
        let a = tail_fit(&est, &[0.0], 1.0, 1.0).unwrap();
        let b = tail_fit(&scaled, &[0.0], 1.0, 1.0).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9 && (a.slope - 0.5 / s2).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn rate_function_is_nonnegative_and_vanishes_at_the_start(y in -1.5f64..1.5, z0 in -1.0f64..1.0) {
        let k = CovKernel::new(KernelSpec::fbm(0.4, 1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let cfg = RateConfig { starts: 2, ..Default::default() };
        let vf = VfSpec::BoundedNonlinear { dim: 1 }.build().unwrap();
        let r = rate_function(&[y], &k, vf.as_ref(), &[z0], &grid, &cfg).unwrap();
        prop_assert!(r.d2 >= 0.0);
        let id = VfSpec::Identity { dim: 1 }.build().unwrap();
        let at_start = rate_function(&[z0], &k, id.as_ref(), &[z0], &grid, &cfg).unwrap();
        prop_assert_eq!(at_start.d2, 0.0);
    }
}
