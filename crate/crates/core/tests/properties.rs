use std::f64::consts::PI;

use kslab_core::diagnostics::{barycentric_delta, g_eps, MonotoneFn};
use kslab_core::grid_solver::{auto_dt_for, fv_step_with, velocity_field, AdvectionScheme, ConvolutionMethod};
use kslab_core::initial_data::InitialMeasure;
use kslab_core::kernels::{eval_k_eps, kernel_gap, kernel_gap_closed_form};
use kslab_core::measures::{Measure, PairMethod};
use kslab_core::particle_solver::drift_field;
use kslab_core::{GridDensity, RunConfig, Vec2, WeightedEnsemble};
use proptest::prelude::*;

fn point(scale: f64) -> impl Strategy<Value = Vec2> {
    (-scale..scale, -scale..scale).prop_map(|(x, y)| Vec2::new(x, y))
}

fn epsilon() -> impl Strategy<Value = f64> {
    (-8.0f64..0.0).prop_map(|e| 10f64.powf(e))
}

fn family() -> impl Strategy<Value = MonotoneFn> {
    prop_oneof![
        (0.1f64..=2.0).prop_map(|p| MonotoneFn::InversePower { p }),
        epsilon().prop_map(|epsilon| MonotoneFn::Regularized { epsilon }),
        (0.01f64..2.0, 0.05f64..1.95).prop_map(|(a, gamma)| MonotoneFn::ShiftedPower { a, gamma }),
        Just(MonotoneFn::LogInverseSquare),
    ]
}

fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_is_bounded_and_odd(z in point(10.0), eps in epsilon()) {
        let k = eval_k_eps(z, eps).unwrap();
        prop_assert!(z.norm() * k.norm() <= 1.0 / (2.0 * PI) + 1e-15);
        prop_assert!(k.norm() <= (1.0 + 1e-12) / (4.0 * PI * eps.sqrt()));
        prop_assert_eq!(eval_k_eps(-z, eps).unwrap(), -k);
    }

    #[test]
    fn kernel_gap_matches_closed_form(z in point(10.0), eps in epsilon()) {
        prop_assume!(z.norm_sq() > 1e-12);
        let gap = kernel_gap(z, eps).unwrap();
        prop_assert!((gap - kernel_gap_closed_form(z, eps)).abs() <= 1e-14);
    }

    #[test]
    fn barycentric_refined_bound(x in point(5.0), y in point(5.0), phi in family(), psi in family()) {
        prop_assume!(x.norm() > 1e-6 && y.norm() > 1e-6 && (x + y).norm() > 1e-6);
        let d = barycentric_delta(x, y, phi, psi).unwrap();
        prop_assert!(d.refined_lb >= 0.0);
        prop_assert!(d.delta >= d.refined_lb - 1e-10 * d.scale);
    }

    #[test]
    fn g_eps_is_symmetric_and_translation_invariant(
        x in point(3.0), y in point(3.0), z in point(3.0), shift in point(10.0), eps in epsilon(),
    ) {
        let g = g_eps(x, y, z, eps);
        prop_assume!(g.is_finite());
        let tol = 1e-9 * (1.0 + g.abs());
        prop_assert!((g_eps(y, z, x, eps) - g).abs() <= tol);
        prop_assert!((g_eps(y, x, z, eps) - g).abs() <= tol);
        prop_assert!((g_eps(x + shift, y + shift, z + shift, eps) - g).abs() <= tol);
    }

    #[test]
    fn drift_is_antisymmetric(pts in prop::collection::vec(point(2.0), 2..80), eps in epsilon()) {
        let e = WeightedEnsemble::with_mass(pts, 5.0).unwrap();
        let b = drift_field(&e, eps).unwrap();
        let total = b.iter().fold(Vec2::ZERO, |acc, v| acc + *v).norm();
        let scale: f64 = b.iter().map(|v| v.norm()).sum();
        prop_assert!(total <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn ensemble_moments_ignore_translation(
        pts in prop::collection::vec(point(2.0), 3..40), shift in point(50.0), gamma in 0.2f64..2.0,
    ) {
        let a = WeightedEnsemble::with_mass(pts.clone(), 3.0).unwrap();
        let b = WeightedEnsemble::with_mass(pts.iter().map(|p| *p + shift).collect(), 3.0).unwrap();
        let (pa, pb) = (a.pair_moment(gamma).unwrap(), b.pair_moment(gamma).unwrap());
        prop_assert!((pa - pb).abs() <= 1e-9 * pa.abs().max(1.0));
        let ma = a.moment_gamma(gamma, a.center_of_mass()).unwrap();
        let mb = b.moment_gamma(gamma, b.center_of_mass()).unwrap();
        prop_assert!((ma - mb).abs() <= 1e-8 * ma.max(1.0));
    }

    #[test]
    fn grid_pair_methods_agree(vals in density(12)) {
        let g = GridDensity::new(3.0, 12, vals).unwrap();
        let phi = |r: f64| (-r).exp() + r * r;
        let d = g.pair_sum_with(PairMethod::Direct, phi);
        let f = g.pair_sum_with(PairMethod::Fft, phi);
        prop_assert!((d - f).abs() <= 1e-10 * d.abs().max(1e-300));
    }

    #[test]
    fn finite_volume_step_conserves_and_stays_nonnegative(
        vals in density(16), eps in 0.01f64..1.0, van_leer in any::<bool>(),
    ) {
        let scheme = if van_leer { AdvectionScheme::VanLeer } else { AdvectionScheme::Upwind };
        let mut g = GridDensity::new(2.0, 16, vals).unwrap();
        let m0 = g.total_mass();
        prop_assume!(m0 > 0.0);
        for _ in 0..20 {
            let u = velocity_field(&g, eps, ConvolutionMethod::FftPadded).unwrap();
            let dt = auto_dt_for(scheme, g.cell_size(), u.max_speed(), 1.0);
            g = fv_step_with(&g, Some(&u), dt, scheme).unwrap();
            prop_assert!(g.values().iter().all(|&v| v >= 0.0));
        }
        prop_assert!(((g.total_mass() - m0) / m0).abs() <= 1e-13);
    }

    #[test]
    fn mollified_mass_and_scaling(var in 0.05f64..3.0, mass in 0.1f64..40.0, factor in 0.1f64..5.0) {
        let f0 = InitialMeasure::gaussian(Vec2::new(0.5, -1.0), var, mass).unwrap();
        let s = f0.scaled(factor).unwrap();
        prop_assert!((s.mass() - factor * mass).abs() <= 1e-12 * factor * mass);
        let g = f0.project_to_grid(0.05, 12.0, 48).unwrap();
        prop_assert!((g.total_mass() - mass).abs() <= 1e-12 * mass);
    }

    #[test]
    fn run_config_round_trips(eps in epsilon().prop_filter("in range", |e| *e >= 1e-4), seed in any::<u64>(), n in 1usize..5000) {
        let text = format!(
            r#"{{"f0": {{"gaussians": [{{"mean": [0, 0], "variance": 1, "mass": 3}}]}},
                "epsilon": {eps}, "t_final": 1, "seed": {seed},
                "solver": {{"particles": {{"n": {n}, "dt": 1e-4}}}},
                "diagnostics": {{"gamma": 1.5, "nu": 0.5}}, "output_dir": "x"}}"#
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
