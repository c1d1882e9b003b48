use spinorbit::basins::{
    barrier_check, classify_capture, confidence_half_width, run_survey, strip_stats, BarrierRule, CaptureOutcome,
    LockMonitor, Outcome, SurveyConfig,
};
use spinorbit::integrator::{integrate, IntegratorConfig, Sampling};
use spinorbit::{PhysicalParams, SpinState};

fn small_survey(jobs: Option<usize>) -> SurveyConfig {
    SurveyConfig { strips: Some(vec![1, 2]), samples: 6, seed: 7, jobs, ..SurveyConfig::default() }
}

#[test]
fn survey_is_independent_of_worker_count() {
    let p = PhysicalParams::default();
    let one = run_survey(&small_survey(Some(1)), &p).unwrap();
    let three = run_survey(&small_survey(Some(3)), &p).unwrap();
    assert_eq!(one, three);
    assert!(one.outcomes.iter().all(|o| o.outcome != Outcome::Unresolved));
    let resolved: usize = one.strips.iter().map(|s| s.total).sum();
    assert_eq!(resolved, 6);
}

#[test]
fn initial_conditions_depend_only_on_seed_and_index() {
    let p = PhysicalParams::default();
    let a = SurveyConfig { samples: 50, ..SurveyConfig::default() };
    let b = SurveyConfig { samples: 900, ..SurveyConfig::default() };
    for index in 0..50 {
        assert_eq!(a.initial_condition(index, &p), b.initial_condition(index, &p));
    }
    let other = SurveyConfig { seed: 2, ..a.clone() };
    assert_ne!(a.initial_condition(0, &p), other.initial_condition(0, &p));
}

fn outcome(index: usize, ratio: f64, numerator: Option<i32>, p: &PhysicalParams) -> CaptureOutcome {
    CaptureOutcome {
        index,
        strip: (ratio / 0.5).ceil() as usize - 1,
        initial: SpinState::new(1.0, ratio * p.n, 0.0),
        outcome: numerator.map_or(Outcome::Unresolved, |numerator| Outcome::Captured { numerator }),
        capture_time: numerator.map(|_| 1e6),
        full_periods: 0,
    }
}

#[test]
fn strip_tallies_add_up() {
    let p = PhysicalParams::default();
    let cfg = SurveyConfig::default();
    let outcomes: Vec<CaptureOutcome> = (0..90)
        .map(|i| {
            let ratio = 0.25 + 0.5 * (i % 9) as f64;
            let numerator = match i % 4 {
                0 => None,
                1 => Some(2),
                _ => Some(3),
            };
            outcome(i, ratio, numerator, &p)
        })
        .collect();
    let strips = strip_stats(&outcomes, &cfg);
    assert_eq!(strips.len(), 9);
    for s in &strips {
        assert_eq!(s.counts.values().sum::<usize>(), s.total);
        let fractions: f64 = s.counts.keys().map(|&o| s.fraction(o)).sum();
        assert!((fractions - 1.0).abs() < 1e-12);
        let resolved: f64 = [2, 3].iter().map(|&k| s.resolved_probability(k).0).sum();
        assert!((resolved - 1.0).abs() < 1e-12);
    }
}

#[test]
fn interval_shrinks_with_the_square_root_of_the_count() {
    let wide = confidence_half_width(0.3, 100);
    let narrow = confidence_half_width(0.3, 400);
    assert!((wide / narrow - 2.0).abs() < 1e-12);
    assert!((wide - 1.96 * (0.21f64 / 100.0).sqrt()).abs() < 1e-15);
    assert_eq!(confidence_half_width(0.0, 10), 0.0);
}

#[test]
fn barrier_rules() {
    let p = PhysicalParams::default();
    let outcomes = [
        outcome(0, 1.75, Some(3), &p),
        outcome(1, 3.9, Some(2), &p),
        outcome(2, 0.7, Some(3), &p),
        outcome(3, 1.2, Some(4), &p),
        outcome(4, 0.4, Some(-2), &p),
        outcome(5, 2.2, None, &p),
        outcome(6, 1.2, Some(3), &p),
    ];
    let report = barrier_check(&outcomes, &p);
    assert_eq!(report.checked, 6);
    assert_eq!(
        report.violations,
        vec![
            (1, BarrierRule::BelowThreeHalves),
            (2, BarrierRule::AboveSynchronous),
            (3, BarrierRule::OutsideBand),
            (4, BarrierRule::Retrograde),
        ]
    );
    assert!(!report.passed());
    assert!(barrier_check(&outcomes[..1], &p).passed());
}

#[test]
fn synchronous_periodic_point_locks_immediately() {
    let p = PhysicalParams::default();
    let start = SpinState::new(3.14151499384565687042, 0.99986201340697665762 * p.n, 0.0);
    let strobes =
        integrate(start, 520.0 * p.period(), Sampling::Stroboscopic, &IntegratorConfig::default(), &p).unwrap().samples;
    let cfg = SurveyConfig::default();
    assert_eq!(classify_capture(&strobes, &cfg, &p), (Outcome::Captured { numerator: 2 }, Some(0.0)));
    let mut monitor = LockMonitor::new(cfg.delta, cfg.lock_periods, p.n);
    let first = strobes.iter().position(|s| monitor.observe(s).is_some()).unwrap();
    assert_eq!(first, cfg.lock_periods as usize);
}
