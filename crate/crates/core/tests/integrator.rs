use spinorbit::integrator::{
    integrate, integrate_variational, stroboscopic_map, IntegrationError, IntegratorConfig, Sampling,
};
use spinorbit::{PhysicalParams, SpinState};

fn with(edit: impl FnOnce(&mut PhysicalParams)) -> PhysicalParams {
    let mut p = PhysicalParams::default();
    edit(&mut p);
    p
}

fn free_rotor() -> PhysicalParams {
    with(|p| {
        p.zeta = 0.0;
        p.eta = 0.0;
    })
}

fn undamped() -> PhysicalParams {
    with(|p| p.lambda = 0.0)
}

/// Conservative model keeping only the `k = 3` harmonic.
fn single_harmonic() -> PhysicalParams {
    let mut p = undamped();
    for k in -2..=9 {
        if k != 3 {
            p.set_coeff(k, 0.0).unwrap();
        }
    }
    p
}

#[test]
fn free_rotor_advances_linearly() {
    let p = free_rotor();
    let cfg = IntegratorConfig::default();
    let traj = integrate(SpinState::new(1.0, 2.0 * p.n, 0.0), 10.0, Sampling::Endpoints, &cfg, &p).unwrap();
    let end = traj.last();
    assert!((end.theta - (1.0 + 20.0 * p.n)).abs() < 1e-9 * end.theta);
    assert_eq!(end.theta_dot, 2.0 * p.n);
    assert_eq!(end.t, 10.0);
}

#[test]
fn free_rotor_tangent_map_is_a_shear() {
    let p = free_rotor();
    let v = integrate_variational(SpinState::new(0.3, 1.2 * p.n, 0.0), 3.5, &IntegratorConfig::default(), &p)
        .unwrap();
    let m = v.tangent;
    assert!((m[0][0] - 1.0).abs() < 1e-12 && (m[1][1] - 1.0).abs() < 1e-12);
    assert!((m[0][1] - 3.5).abs() < 1e-11 && m[1][0].abs() < 1e-12);
}

#[test]
fn tighter_tolerance_reference_agrees() {
    let p = single_harmonic();
    let loose = IntegratorConfig::default();
    let tight = IntegratorConfig { rel_tol: loose.rel_tol / 100.0, abs_tol: loose.abs_tol / 100.0, ..loose };
    let start = SpinState::new(0.4, 1.52 * p.n, 0.0);
    let t_end = 50.0 * p.period();
    let a = *integrate(start, t_end, Sampling::Endpoints, &loose, &p).unwrap().last();
    let b = *integrate(start, t_end, Sampling::Endpoints, &tight, &p).unwrap().last();
    assert!((a.theta - b.theta).abs() < 10.0 * loose.rel_tol * b.theta.abs());
    assert!((a.theta_dot - b.theta_dot).abs() < 10.0 * loose.rel_tol * b.theta_dot.abs());
}

#[test]
fn conservative_flow_is_time_reversible() {
    // θ ↦ −θ(−t) maps solutions of the undamped equation onto solutions
    let p = undamped();
    let cfg = IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..IntegratorConfig::default() };
    let t_end = 20.0 * p.period();
    let start = SpinState::new(0.2, 1.47 * p.n, 0.0);
    let mid = *integrate(start, t_end, Sampling::Endpoints, &cfg, &p).unwrap().last();
    let back = SpinState::new(-mid.theta, mid.theta_dot, -t_end);
    let end = *integrate(back, 0.0, Sampling::Endpoints, &cfg, &p).unwrap().last();
    assert!((end.theta + start.theta).abs() < 1e-8, "{}", end.theta + start.theta);
    assert!((end.theta_dot - start.theta_dot).abs() < 1e-8 * p.n);
}

#[test]
fn undamped_flow_preserves_area() {
    let p = undamped();
    let v = integrate_variational(SpinState::new(3.1415, 1.5 * p.n, 0.0), p.period(), &IntegratorConfig::default(), &p)
        .unwrap();
    assert!((v.determinant() - 1.0).abs() < 1e-8);
}

#[test]
fn stroboscopic_samples_land_on_period_multiples() {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let traj =
        integrate(SpinState::new(1.7, 1.75 * p.n, 0.0), 20.5 * p.period(), Sampling::Stroboscopic, &cfg, &p).unwrap();
    assert_eq!(traj.samples.len(), 22);
    assert_eq!(traj.samples[0], SpinState::new(1.7, 1.75 * p.n, 0.0));
    assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    for (k, s) in traj.samples.iter().take(21).enumerate() {
        assert!((s.t - k as f64 * p.period()).abs() < 1e-12);
    }
}

#[test]
fn free_rotor_section_advance() {
    let p = free_rotor();
    let s = stroboscopic_map(SpinState::new(0.0, 1.3 * p.n, 0.0), 1, &IntegratorConfig::default(), &p).unwrap();
    assert!((s.theta - 1.3 * p.n * p.period()).abs() < 1e-12);
}

#[test]
fn dense_output_matches_restarted_integration() {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let start = SpinState::new(0.9, 2.2 * p.n, 0.0);
    let traj = integrate(start, 5.0, Sampling::Uniform(0.37), &cfg, &p).unwrap();
    let probe = traj.samples[7];
    let direct = *integrate(start, probe.t, Sampling::Endpoints, &cfg, &p).unwrap().last();
    assert!((probe.theta - direct.theta).abs() < 1e-8);
    assert!((probe.theta_dot - direct.theta_dot).abs() < 1e-8 * p.n);
}

#[test]
fn backwards_interval_is_rejected() {
    let p = PhysicalParams::default();
    let err = integrate(SpinState::new(0.0, p.n, 1.0), 0.5, Sampling::Endpoints, &IntegratorConfig::default(), &p);
    assert!(matches!(err, Err(IntegrationError::BadInterval { .. })));
}
