//! Monte-Carlo capture statistics over the region `θ ∈ [0, π]`, `θ̇ ∈ [0, 4.5n]`.
//!
//! The region is cut into strips of width `n/2` in `θ̇`. Each sample is
//! followed until the spin locks onto a `p:2` ratio or the time budget runs
//! out, and outcomes are tallied per strip.

mod lock;
mod multiscale;

pub use lock::{Lock, LockMonitor};
pub use multiscale::{MultiscaleConfig, Propagation};

use crate::integrator::{IntegrationError, IntegratorConfig};
use crate::model::{PhysicalParams, SpinState};
use multiscale::{follow, FollowSettings};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyConfig {
    /// Initial `θ` range, rad.
    pub theta_range: (f64, f64),
    /// Initial `θ̇/n` range.
    pub thetadot_range: (f64, f64),
    /// Strip width in `θ̇/n`.
    pub strip_width: f64,
    /// Strip indices to sample; `None` samples every strip.
    pub strips: Option<Vec<usize>>,
    /// Total sample count, dealt round-robin over the strips.
    pub samples: usize,
    pub seed: u64,
    /// Lock band half-width in `θ̇/n`.
    pub delta: f64,
    /// Lock window, periods.
    pub lock_periods: u32,
    /// yr.
    pub max_time: f64,
    pub integrator: IntegratorConfig,
    pub propagation: Propagation,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            theta_range: (0.0, PI),
            thetadot_range: (0.0, 4.5),
            strip_width: 0.5,
            strips: None,
            samples: 900,
            seed: 1,
            delta: 0.02,
            lock_periods: 500,
            max_time: 3e7,
            integrator: IntegratorConfig::survey(),
            propagation: Propagation::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurveyError {
    Config(String),
    Integration { index: usize, source: IntegrationError },
}

impl fmt::Display for SurveyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "invalid survey config: {msg}"),
            Self::Integration { index, source } => write!(f, "sample {index}: {source}"),
        }
    }
}

impl std::error::Error for SurveyError {}

impl SurveyConfig {
    pub fn strip_count(&self) -> usize {
        ((self.thetadot_range.1 - self.thetadot_range.0) / self.strip_width).round() as usize
    }

    /// Strips actually sampled, ascending.
    pub fn active_strips(&self) -> Vec<usize> {
        match &self.strips {
            Some(s) => s.clone(),
            None => (0..self.strip_count()).collect(),
        }
    }

    /// `(lo, hi]` of strip `i` in `θ̇/n`.
    pub fn strip_bounds(&self, i: usize) -> (f64, f64) {
        let lo = self.thetadot_range.0 + i as f64 * self.strip_width;
        (lo, lo + self.strip_width)
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |m: &str| Err(SurveyError::Config(m.to_string()));
        if self.samples == 0 {
            return bad("sample count must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return bad("delta must lie in (0, 0.25)");
        }
        if !(self.theta_range.0 < self.theta_range.1 && self.thetadot_range.0 < self.thetadot_range.1) {
            return bad("ranges must be increasing");
        }
        if !(self.strip_width > 0.0 && self.max_time > 0.0 && self.lock_periods > 0) {
            return bad("strip width, max time and lock window must be positive");
        }
        let count = self.strip_count();
        let span = self.thetadot_range.1 - self.thetadot_range.0;
        if ((count as f64) * self.strip_width - span).abs() > 1e-9 * span {
            return bad("strip width must divide the velocity range");
        }
        let strips = self.active_strips();
        if strips.is_empty() || strips.iter().any(|&s| s >= count) {
            return bad("strip indices out of range");
        }
        if strips.windows(2).any(|w| w[0] >= w[1]) {
            return bad("strip indices must be strictly increasing");
        }
        Ok(())
    }

    /// Strip and initial state of sample `index`; depends only on `(seed, index)`.
    pub fn initial_condition(&self, index: usize, params: &PhysicalParams) -> (usize, SpinState) {
        let strips = self.active_strips();
        let strip = strips[index % strips.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let theta = self.theta_range.0 + (self.theta_range.1 - self.theta_range.0) * rng.gen::<f64>();
        let (lo, hi) = self.strip_bounds(strip);
        // (lo, hi]: 1 − U lies in (0, 1]
        let ratio = lo + (hi - lo) * (1.0 - rng.gen::<f64>());
        (strip, SpinState::new(theta, ratio * params.n, 0.0))
    }
}

/// Final state of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    /// Locked onto the `numerator:2` ratio.
    Captured { numerator: i32 },
    Unresolved,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Captured { numerator } if numerator % 2 == 0 => write!(f, "{}:1", numerator / 2),
            Self::Captured { numerator } => write!(f, "{numerator}:2"),
            Self::Unresolved => write!(f, "unresolved"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureOutcome {
    pub index: usize,
    pub strip: usize,
    pub initial: SpinState,
    pub outcome: Outcome,
    /// Start of the lock window, yr since the initial state.
    pub capture_time: Option<f64>,
    /// Periods integrated with the full equation.
    pub full_periods: u64,
}

/// Run the lock rule over a stroboscopic record.
pub fn classify_capture(strobes: &[SpinState], cfg: &SurveyConfig, params: &PhysicalParams) -> (Outcome, Option<f64>) {
    let mut monitor = LockMonitor::new(cfg.delta, cfg.lock_periods, params.n);
    let t0 = strobes.first().map_or(0.0, |s| s.t);
    for s in strobes {
        if s.t - t0 > cfg.max_time {
            break;
        }
        if let Some(lock) = monitor.observe(s) {
            return (Outcome::Captured { numerator: lock.numerator }, Some(lock.start - t0));
        }
    }
    (Outcome::Unresolved, None)
}

/// Follow one initial state under the survey's propagation and lock rule.
pub fn follow_sample(
    start: SpinState,
    cfg: &SurveyConfig,
    params: &PhysicalParams,
) -> Result<(Outcome, Option<f64>, u64), IntegrationError> {
    let settings = FollowSettings { delta: cfg.delta, lock_periods: cfg.lock_periods, max_time: cfg.max_time };
    let run = follow(start, &cfg.propagation, &settings, &cfg.integrator, params)?;
    Ok(match run.lock {
        Some(lock) => (Outcome::Captured { numerator: lock.numerator }, Some(lock.start - start.t), run.full_periods),
        None => (Outcome::Unresolved, None, run.full_periods),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub outcomes: Vec<CaptureOutcome>,
    pub strips: Vec<StripStats>,
}

/// Draw, follow and tally `cfg.samples` initial conditions.
pub fn run_survey(cfg: &SurveyConfig, params: &PhysicalParams) -> Result<Survey, SurveyError> {
    cfg.validate()?;
    params.validate().map_err(|e| SurveyError::Config(e.to_string()))?;
    let work = || {
        (0..cfg.samples)
            .into_par_iter()
            .map(|index| {
                let (strip, initial) = cfg.initial_condition(index, params);
                let (outcome, capture_time, full_periods) = follow_sample(initial, cfg, params)
                    .map_err(|source| SurveyError::Integration { index, source })?;
                Ok(CaptureOutcome { index, strip, initial, outcome, capture_time, full_periods })
            })
            .collect::<Result<Vec<_>, SurveyError>>()
    };
    let outcomes = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SurveyError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let strips = strip_stats(&outcomes, cfg);
    Ok(Survey { outcomes, strips })
}

/// Tally for one strip.
#[derive(Debug, Clone, PartialEq)]
pub struct StripStats {
    pub strip: usize,
    /// `(lo, hi]` in `θ̇/n`.
    pub bounds: (f64, f64),
    pub total: usize,
    pub counts: BTreeMap<Outcome, usize>,
}

/// Half-width of the normal-approximation 95% interval for a proportion.
pub fn confidence_half_width(p: f64, total: usize) -> f64 {
    if total == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / total as f64).sqrt()
}

impl StripStats {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    pub fn resolved(&self) -> usize {
        self.total - self.count(Outcome::Unresolved)
    }

    /// Fraction of all samples in the strip.
    pub fn fraction(&self, outcome: Outcome) -> f64 {
        self.count(outcome) as f64 / self.total as f64
    }

    /// Fraction of resolved samples, with its 95% half-width.
    pub fn resolved_probability(&self, numerator: i32) -> (f64, f64) {
        let resolved = self.resolved();
        let p = self.count(Outcome::Captured { numerator }) as f64 / resolved as f64;
        (p, confidence_half_width(p, resolved))
    }
}

pub fn strip_stats(outcomes: &[CaptureOutcome], cfg: &SurveyConfig) -> Vec<StripStats> {
    cfg.active_strips()
        .into_iter()
        .map(|strip| {
            let mut counts = BTreeMap::new();
            let mut total = 0;
            for o in outcomes.iter().filter(|o| o.strip == strip) {
                *counts.entry(o.outcome).or_insert(0) += 1;
                total += 1;
            }
            StripStats { strip, bounds: cfg.strip_bounds(strip), total, counts }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierRule {
    /// Below 3:2 from above `1.5n`.
    BelowThreeHalves,
    /// Above 1:1 from below `n`.
    AboveSynchronous,
    /// Neither 3:2 nor 1:1 from `(n, 1.5n]`.
    OutsideBand,
    /// Retrograde from a prograde start.
    Retrograde,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReport {
    pub checked: usize,
    /// `(sample index, rule)` for each rare-event candidate.
    pub violations: Vec<(usize, BarrierRule)>,
}

impl BarrierReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Screen resolved outcomes against the separation barriers.
pub fn barrier_check(outcomes: &[CaptureOutcome], params: &PhysicalParams) -> BarrierReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for o in outcomes {
        let Outcome::Captured { numerator } = o.outcome else { continue };
        checked += 1;
        let ratio = o.initial.theta_dot / params.n;
        if ratio > 0.0 && numerator < 0 {
            violations.push((o.index, BarrierRule::Retrograde));
        }
        if ratio > 1.5 && numerator < 3 {
            violations.push((o.index, BarrierRule::BelowThreeHalves));
        }
        if ratio < 1.0 && numerator > 2 {
            violations.push((o.index, BarrierRule::AboveSynchronous));
        }
        if ratio > 1.0 && ratio <= 1.5 && numerator != 2 && numerator != 3 {
            violations.push((o.index, BarrierRule::OutsideBand));
        }
    }
    BarrierReport { checked, violations }
}

pub fn write_outcomes_csv<W: Write>(outcomes: &[CaptureOutcome], params: &PhysicalParams, mut out: W) -> io::Result<()> {
    writeln!(out, "theta0,thetadot0_over_n,outcome,capture_time")?;
    for o in outcomes {
        let t = o.capture_time.map_or(String::new(), |t| format!("{t:e}"));
        writeln!(out, "{},{},{},{}", o.initial.theta, o.initial.theta_dot / params.n, o.outcome, t)?;
    }
    Ok(())
}

/// One row per strip and outcome: count `m`, fraction of resolved `p`, half-width `c`.
pub fn write_strip_csv<W: Write>(strips: &[StripStats], mut out: W) -> io::Result<()> {
    writeln!(out, "strip_lo,strip_hi,outcome,m,total,resolved,p,c")?;
    for s in strips {
        for (&outcome, &m) in &s.counts {
            let (p, c) = match outcome {
                Outcome::Captured { numerator } => s.resolved_probability(numerator),
                Outcome::Unresolved => {
                    let f = s.fraction(outcome);
                    (f, confidence_half_width(f, s.total))
                }
            };
            writeln!(out, "{},{},{},{},{},{},{:.4},{:.4}", s.bounds.0, s.bounds.1, outcome, m, s.total, s.resolved(), p, c)?;
        }
    }
    Ok(())
}
