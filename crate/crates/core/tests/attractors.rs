use spinorbit::attractors::{
    census_resonance, classify, compute_j, picard_first, picard_zeroth, refine_periodic, refinement_config,
    MultiplierKind, PeriodicSolution, Resonance, TABLE_RESONANCES,
};
use spinorbit::{PhysicalParams, SpinState};
use std::f64::consts::PI;

fn solve(p: i32, theta: f64, ratio: f64, params: &PhysicalParams) -> PeriodicSolution {
    let res = Resonance::new(p).unwrap();
    refine_periodic(SpinState::new(theta, ratio * params.n, 0.0), res, &refinement_config(), params).unwrap()
}

/// Agreement to three significant figures of the tabulated value.
fn three_figures(got: f64, table: f64) -> bool {
    let unit = 10f64.powf(table.abs().log10().floor() - 2.0);
    (got - table).abs() <= 0.5 * unit
}

fn modulus_minus_one(sol: &PeriodicSolution) -> f64 {
    match classify(sol).kind {
        MultiplierKind::ComplexPair { modulus_minus_one } => modulus_minus_one,
        other => panic!("expected a complex pair, got {other:?}"),
    }
}

#[test]
fn zeroth_constants_for_three_halves_and_retrograde() {
    let p = PhysicalParams::default();
    let th = picard_zeroth(Resonance::new(3).unwrap(), &p).unwrap();
    assert!(three_figures(th[0], -2.621e-5));
    assert!((th[1] - (PI / 2.0 - th[0])).abs() < 1e-15);
    let retro = picard_zeroth(Resonance::new(-2).unwrap(), &p).unwrap();
    assert!(three_figures(retro[0], 3.62911e-1));
}

#[test]
fn averaged_torque_examples() {
    let p = PhysicalParams::default();
    let j = |pn: i32| {
        let res = Resonance::new(pn).unwrap();
        compute_j(res, picard_zeroth(res, &p).unwrap()[0], &p)
    };
    assert!((j(2) / 1.390e-4 - 1.0).abs() < 0.01);
    let j_two = j(4);
    assert!((j_two / -2.143e-5 - 1.0).abs() < 0.01);
    assert!(p.gamma * spinorbit::model::tidal_f(2.0 * p.n, &p) > 0.0);
    assert!((j(8) / 4.898e-5 - 1.0).abs() < 5e-4);
}

#[test]
fn first_constants() {
    let p = PhysicalParams::default();
    let first = |pn: i32| picard_first(Resonance::new(pn).unwrap(), &p).unwrap();
    assert!(three_figures(first(3).theta_bar1[0], -8.888e-5));
    let two = first(4);
    assert!(three_figures(two.theta_bar1[0], 3.259e-5));
    assert!(two.theta_bar0[0] < 0.0 && two.theta_bar1[0] > 0.0);
    let four = first(8);
    assert!(three_figures(four.theta_bar1[0], -3.621e-3) && three_figures(four.theta_bar0[0], -3.621e-3));
}

#[test]
fn far_from_kinks_the_first_correction_is_small() {
    let p = PhysicalParams::default();
    for pn in [5, 6, 7, 8] {
        let a = picard_first(Resonance::new(pn).unwrap(), &p).unwrap();
        let rel = (a.theta_bar1[0] - a.theta_bar0[0]).abs() / a.theta_bar0[0].abs();
        assert!(rel < 0.1, "{pn}: {rel}");
    }
}

#[test]
fn newton_recovers_the_tabulated_three_halves_point() {
    let p = PhysicalParams::default();
    let sol = solve(3, 3.14150, 1.50006, &p);
    assert!((sol.section_point.theta - 3.14150380436395113505).abs() < 1e-6);
    assert!((sol.section_point.theta_dot / p.n - 1.50005973350740330252).abs() < 1e-6);
    let again = solve(3, sol.section_point.theta, sol.section_point.theta_dot / p.n, &p);
    assert_eq!(again.newton_steps, 0);
    assert_eq!(again.section_point, sol.section_point);
    let lam = modulus_minus_one(&sol);
    assert!((lam / 1.055e-4 - 1.0).abs() < 0.1, "{lam:e}");
    assert!(!sol.stable);
}

#[test]
fn tabulated_synchronous_point_is_already_converged() {
    let p = PhysicalParams::default();
    let sol = solve(2, 3.14151499384565687042, 0.99986201340697665762, &p);
    assert!(sol.newton_steps <= 1);
    let lam = modulus_minus_one(&sol);
    assert!((lam / -4.461e-4 - 1.0).abs() < 0.1, "{lam:e}");
    assert!(sol.stable);
}

#[test]
fn three_halves_saddle_has_a_real_pair() {
    let p = PhysicalParams::default();
    let sol = solve(3, 1.57076, 1.49994, &p);
    match classify(&sol).kind {
        MultiplierKind::RealPair { low, high } => {
            assert!((low - 0.9185).abs() < 5e-4 && (high - 1.0889).abs() < 5e-4, "{low} {high}");
        }
        other => panic!("{other:?}"),
    }
    let [l1, l2] = sol.floquet;
    let det = sol.monodromy[0][0] * sol.monodromy[1][1] - sol.monodromy[0][1] * sol.monodromy[1][0];
    assert!(((l1.re * l2.re - l1.im * l2.im) / det - 1.0).abs() < 1e-6);
    // the tabulated pair multiplies to slightly above one as well
    assert!(det > 0.0);
}

#[test]
fn half_turn_shift_leaves_multipliers_unchanged() {
    let p = PhysicalParams::default();
    let res = Resonance::new(3).unwrap();
    let picard = picard_first(res, &p).unwrap();
    for branch in 0..2 {
        let a = refine_periodic(picard.seed(branch, &p), res, &refinement_config(), &p).unwrap();
        let b = refine_periodic(picard.seed(branch + 2, &p), res, &refinement_config(), &p).unwrap();
        for (x, y) in a.floquet.iter().zip(&b.floquet) {
            assert!((x.modulus() - y.modulus()).abs() < 1e-6);
        }
    }
}

#[test]
fn stability_census_matches_the_figure_labels() {
    let p = PhysicalParams::default();
    let cfg = refinement_config();
    for pn in TABLE_RESONANCES {
        let res = Resonance::new(pn).unwrap();
        let rows = census_resonance(res, &cfg, &p).unwrap();
        let sols: Vec<PeriodicSolution> = rows.into_iter().map(|r| r.solution.unwrap()).collect();
        for s in &sols {
            let [l1, l2] = s.floquet;
            let product = l1.re * l2.re - l1.im * l2.im;
            let m = s.monodromy;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            assert!(product > 0.0 && (product / det - 1.0).abs() < 1e-6, "{res}: {product}");
        }
        let saddle = |s: &PeriodicSolution| matches!(classify(s).kind, MultiplierKind::RealPair { low, high } if low < 1.0 && high > 1.0);
        let non_saddle: Vec<&PeriodicSolution> = sols.iter().filter(|s| !saddle(s)).collect();
        let all_unstable = non_saddle.iter().all(|s| !s.stable);
        if pn > 0 {
            assert_eq!(all_unstable, matches!(pn, 1 | 3 | 4), "{res}");
        }
    }
}
