use spinorbit::model::{tidal_f, tidal_f_prime};
use spinorbit::precapture::{
    fit_linear_tidal, max_omega_deviation, solve_omega, thetadot_approx, time_to_capture, PrecaptureError,
};
use spinorbit::PhysicalParams;

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

#[test]
fn tangent_line_constants() {
    let p = PhysicalParams::default();
    let fit = fit_linear_tidal(1.95 * p.n, &p).unwrap();
    assert!(rel(fit.a, 1.423e-5) < 5e-3 && rel(fit.b, 1.894e-7) < 5e-3, "{fit:?}");
    let fit = fit_linear_tidal(3.25 * p.n, &p).unwrap();
    assert!(rel(fit.a, 6.733e-6) < 5e-3 && rel(fit.b, 2.056e-8) < 5e-3, "{fit:?}");
    assert!((fit.operating_point - 3.25 * p.n).abs() < 1e-12);
}

#[test]
fn tangent_line_touches_the_torque() {
    let p = PhysicalParams::default();
    for ratio in [1.2, 1.75, 2.3, 3.25, 4.1] {
        let x = ratio * p.n;
        let fit = fit_linear_tidal(x, &p).unwrap();
        assert!((p.eta * tidal_f(x, &p) - (fit.a - fit.b * x)).abs() < 1e-12);
        assert!((p.eta * tidal_f_prime(x, &p) + fit.b).abs() < 1e-12);
        assert!(fit.b > 0.0);
    }
}

#[test]
fn operating_points_near_kinks_are_refused() {
    let p = PhysicalParams::default();
    for ratio in [1.0, 1.51, 1.99, 2.5] {
        let err = fit_linear_tidal(ratio * p.n, &p).unwrap_err();
        assert!(matches!(err, PrecaptureError::KinkProximity { .. }));
    }
}

#[test]
fn frequency_shift_maxima() {
    let p = PhysicalParams::default();
    for (ratio, want) in [(1.95, 0.073), (3.25, 0.010)] {
        let fit = fit_linear_tidal(ratio * p.n, &p).unwrap();
        let dev = max_omega_deviation(ratio * p.n, &fit, 64, &p).unwrap();
        assert!(rel(dev, want) < 0.1, "{ratio}: {dev}");
    }
}

#[test]
fn without_triaxial_forcing_frequencies_are_unshifted() {
    let mut p = PhysicalParams::default();
    p.zeta = 0.0;
    p.eta = 0.0;
    let theta_dot0 = 2.7 * p.n;
    let fit = fit_linear_tidal(theta_dot0, &PhysicalParams::default()).unwrap();
    let sol = solve_omega(0.4, theta_dot0, &fit, &p).unwrap();
    for &(k, w) in &sol.omega {
        assert_eq!(w, theta_dot0 - k as f64 * p.n);
    }
    assert_eq!(sol.max_deviation, 0.0);
    for t in [0.0, 1e3, 2.5e5, 1e6] {
        let want = fit.asymptote() + (fit.b * t).exp() * (theta_dot0 - fit.asymptote());
        assert!((thetadot_approx(t, &sol, &fit, &p) - want).abs() < 1e-12 * want.abs());
    }
}

#[test]
fn approximation_starts_at_the_initial_rate() {
    let p = PhysicalParams::default();
    for (ratio, theta0) in [(1.95, 1.7), (3.25, 0.3), (3.25, 2.9)] {
        let fit = fit_linear_tidal(ratio * p.n, &p).unwrap();
        let sol = solve_omega(theta0, ratio * p.n, &fit, &p).unwrap();
        assert!((thetadot_approx(0.0, &sol, &fit, &p) - ratio * p.n).abs() < 1e-12);
        assert!(sol.r < 0.0);
        assert!(sol.omega.iter().all(|&(_, w)| w.abs() > 1.0));
    }
}

#[test]
fn capture_time_estimates() {
    let p = PhysicalParams::default();
    let estimate = |ratio: f64| {
        let fit = fit_linear_tidal(ratio * p.n, &p).unwrap();
        time_to_capture(ratio * p.n, 1.5 * p.n, &fit).unwrap()
    };
    assert!((estimate(1.95) / 2.08e6 - 1.0).abs() < 5e-3);
    assert!((estimate(3.25) / 8.38e6 - 1.0).abs() < 5e-3);
}

#[test]
fn capture_time_edge_cases_and_ordering() {
    let p = PhysicalParams::default();
    let fit = fit_linear_tidal(3.25 * p.n, &p).unwrap();
    let start = 3.25 * p.n;
    assert_eq!(time_to_capture(start, start, &fit).unwrap(), 0.0);
    assert!(matches!(time_to_capture(start, start + 1.0, &fit), Err(PrecaptureError::Unreachable { .. })));
    let targets = [1.5, 2.0, 2.5, 3.0];
    let times: Vec<f64> = targets.iter().map(|t| time_to_capture(start, t * p.n, &fit).unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] > w[1]));
    let longer = time_to_capture(3.5 * p.n, 1.5 * p.n, &fit).unwrap();
    assert!(longer > times[0]);
}
