use proptest::prelude::*;
use spinorbit::basins::{confidence_half_width, SurveyConfig};
use spinorbit::integrator::{integrate, integrate_variational, stroboscopic_map, IntegratorConfig, Sampling};
use spinorbit::model::xi_kernel;
use spinorbit::precapture::{fit_linear_tidal, solve_omega, thetadot_approx, time_to_capture};
use spinorbit::quasiperiodic::{i1, i2};
use spinorbit::{PhysicalParams, SpinState};

fn free_rotor() -> PhysicalParams {
    let mut p = PhysicalParams::default();
    p.zeta = 0.0;
    p.eta = 0.0;
    p
}

fn undamped() -> PhysicalParams {
    let mut p = PhysicalParams::default();
    p.lambda = 0.0;
    p
}

proptest! {
    #[test]
    fn kernel_is_odd(x in -200.0f64..200.0) {
        let p = PhysicalParams::default();
        prop_assert_eq!(xi_kernel(-x, &p), -xi_kernel(x, &p));
    }

    #[test]
    fn solvability_integrals_are_odd(c0 in 0.0f64..1.0, a in 0.0f64..1e-2) {
        let p = PhysicalParams::default();
        prop_assert_eq!(i1(-c0, &p), -i1(c0, &p));
        prop_assert!((i2(-a, &p) + i2(a, &p)).abs() < 1e-12);
    }

    #[test]
    fn interval_scales_as_inverse_root(p in 0.01f64..0.99, total in 1usize..5000) {
        let ratio = confidence_half_width(p, total) / confidence_half_width(p, 4 * total);
        prop_assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_their_strip(seed in any::<u64>(), index in 0usize..100_000) {
        let p = PhysicalParams::default();
        let cfg = SurveyConfig { seed, ..SurveyConfig::default() };
        let (strip, s) = cfg.initial_condition(index, &p);
        let (lo, hi) = cfg.strip_bounds(strip);
        prop_assert!(s.theta_dot / p.n > lo && s.theta_dot / p.n <= hi);
        prop_assert_eq!(cfg.initial_condition(index, &p), (strip, s));
    }

    #[test]
    fn approximation_reproduces_initial_rate(ratio in 2.6f64..4.4, theta0 in 0.0f64..3.14) {
        let p = PhysicalParams::default();
        prop_assume!(((2.0 * ratio).round() - 2.0 * ratio).abs() > 0.05);
        let fit = fit_linear_tidal(ratio * p.n, &p).unwrap();
        let sol = solve_omega(theta0, ratio * p.n, &fit, &p).unwrap();
        prop_assert!((thetadot_approx(0.0, &sol, &fit, &p) - ratio * p.n).abs() < 1e-10);
    }

    #[test]
    fn capture_time_is_monotone(start in 2.0f64..4.0, lo in 1.0f64..1.9, gap in 0.01f64..0.1) {
        let p = PhysicalParams::default();
        let fit = fit_linear_tidal(3.25 * p.n, &p).unwrap();
        let near = time_to_capture(start * p.n, (lo + gap) * p.n, &fit).unwrap();
        let far = time_to_capture(start * p.n, lo * p.n, &fit).unwrap();
        let later = time_to_capture((start + gap) * p.n, lo * p.n, &fit).unwrap();
        prop_assert!(far > near && later > far);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_rotor_is_exact(theta in -3.0f64..3.0, ratio in -2.0f64..4.5, t_end in 0.1f64..20.0) {
        let p = free_rotor();
        let start = SpinState::new(theta, ratio * p.n, 0.0);
        let end = *integrate(start, t_end, Sampling::Endpoints, &IntegratorConfig::default(), &p).unwrap().last();
        prop_assert_eq!(end.theta_dot, start.theta_dot);
        let want = theta + ratio * p.n * t_end;
        prop_assert!((end.theta - want).abs() < 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn conservative_section_map_preserves_area(theta in 0.0f64..6.28, ratio in 0.3f64..4.2) {
        let p = undamped();
        let v = integrate_variational(SpinState::new(theta, ratio * p.n, 0.0), p.period(), &IntegratorConfig::default(), &p)
            .unwrap();
        prop_assert!((v.determinant() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn section_maps_compose(theta in 0.0f64..6.28, ratio in 0.3f64..4.2, first in 1u32..6, second in 1u32..6) {
        let p = PhysicalParams::default();
        let cfg = IntegratorConfig::default();
        let start = SpinState::new(theta, ratio * p.n, 0.0);
        let stepwise = stroboscopic_map(stroboscopic_map(start, first, &cfg, &p).unwrap(), second, &cfg, &p).unwrap();
        let direct = stroboscopic_map(start, first + second, &cfg, &p).unwrap();
        prop_assert!((stepwise.t - direct.t).abs() < 1e-12);
        prop_assert!((stepwise.theta - direct.theta).abs() < 1e-8);
        prop_assert!((stepwise.theta_dot - direct.theta_dot).abs() < 1e-8 * p.n);
    }

    #[test]
    fn tighter_tolerance_converges(theta in 0.0f64..6.28, ratio in 0.3f64..4.2) {
        let p = PhysicalParams::default();
        let cfg = IntegratorConfig::default();
        let tight = IntegratorConfig { rel_tol: cfg.rel_tol / 100.0, abs_tol: cfg.abs_tol / 100.0, ..cfg };
        let start = SpinState::new(theta, ratio * p.n, 0.0);
        let a = stroboscopic_map(start, 10, &cfg, &p).unwrap();
        let b = stroboscopic_map(start, 10, &tight, &p).unwrap();
        prop_assert!((a.theta - b.theta).abs() < 10.0 * cfg.rel_tol * (1.0 + b.theta.abs()));
        prop_assert!((a.theta_dot - b.theta_dot).abs() < 10.0 * cfg.rel_tol * b.theta_dot.abs().max(p.n));
    }
}
