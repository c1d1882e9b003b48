//! Hybrid propagation for capture runs lasting tens of millions of years.
//!
//! Between separatrices the spin circulates about its home resonance `j`
//! (the nearest half-integer multiple of `n`) as a pendulum driven slowly by
//! the tide. There the state is carried as the pendulum energy and angle
//! variable with the tidal drift averaged over one circulation, after a
//! first-order near-identity change of variables has removed the other
//! triaxial harmonics. Near a separatrix, and for the whole lock window, the
//! full equation is integrated instead.

use super::lock::{Lock, LockMonitor};
use crate::elliptic::{complete_k, incomplete_f, jacobi_am};
use crate::integrator::{Dop853, IntegrationError, IntegratorConfig, OdeSystem, Propagator, SpinSystem, StepControl};
use crate::model::{PhysicalParams, SpinModel, SpinState};
use crate::quadrature::GaussLegendre;
use std::f64::consts::{PI, TAU};

/// Tuning of the averaged/full hand-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleConfig {
    /// Full integration starts once `E − c` falls below `band_fraction · c + band_cycles · |Ė| T(E)`.
    pub band_fraction: f64,
    pub band_cycles: f64,
    /// Full integration ends once `E − c` exceeds `exit_factor` times that band.
    pub exit_factor: f64,
    /// Strobes between release checks during full integration.
    pub release_check: u32,
    /// Gauss-Legendre nodes for the orbit average over `[0, π]`.
    pub averaging_nodes: usize,
    /// Tolerance of the averaged flow.
    pub rel_tol: f64,
}

impl Default for MultiscaleConfig {
    fn default() -> Self {
        Self {
            band_fraction: 0.02,
            band_cycles: 50.0,
            exit_factor: 2.0,
            release_check: 8,
            averaging_nodes: 24,
            rel_tol: 1e-9,
        }
    }
}

/// How a sample is followed in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagation {
    /// Averaged flow away from separatrices, full integration near them.
    Multiscale(MultiscaleConfig),
    /// Full integration throughout.
    Direct,
}

impl Default for Propagation {
    fn default() -> Self {
        Self::Multiscale(MultiscaleConfig::default())
    }
}

/// Fixed settings for one followed trajectory.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FollowSettings {
    pub delta: f64,
    pub lock_periods: u32,
    pub max_time: f64,
}

/// Where a followed trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Followed {
    pub lock: Option<Lock>,
    /// Periods spent under full integration.
    pub full_periods: u64,
}

/// Pendulum coordinates relative to a home resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PendulumCoords {
    pub energy: f64,
    pub u: f64,
    /// Resonant angle in `(−π, π]`.
    pub psi: f64,
}

/// Home resonance `j` with its pendulum strength and the detuned harmonics.
pub(crate) struct Frame {
    pub j: i32,
    /// `ζ |A_j|`.
    pub c: f64,
    /// `π` when `A_j < 0`, so that the stable point sits at `ψ = 0`.
    shift: f64,
    /// `(k, ζ A_k)` for the other harmonics.
    others: Vec<(f64, f64)>,
    n: f64,
    period: f64,
}

fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

impl Frame {
    pub fn new(j: i32, params: &PhysicalParams) -> Self {
        let strength = params.zeta * params.effective_coeff(j);
        let others = params
            .triaxial_indices()
            .into_iter()
            .filter(|&k| k != j)
            .map(|k| (k as f64, params.zeta * params.effective_coeff(k)))
            .filter(|&(_, a)| a != 0.0)
            .collect();
        Self {
            j,
            c: strength.abs(),
            shift: if strength < 0.0 { PI } else { 0.0 },
            others,
            n: params.n,
            period: params.period(),
        }
    }

    pub fn nearest(theta_dot: f64, params: &PhysicalParams) -> Self {
        Self::new((2.0 * theta_dot / params.n).round() as i32, params)
    }

    fn center(&self) -> f64 {
        0.5 * self.j as f64 * self.n
    }

    /// `n t` reduced to `[0, 2π)` without forming the large product.
    fn orbit_phase(&self, t: f64) -> f64 {
        TAU * (t / self.period).rem_euclid(1.0)
    }

    /// Forced displacement and velocity of the detuned harmonics.
    fn forced(&self, theta: f64, theta_dot: f64, phase: f64) -> (f64, f64) {
        let mut dx = 0.0;
        let mut dv = 0.0;
        for &(k, a) in &self.others {
            let detuning = 2.0 * theta_dot - k * self.n;
            let (s, c) = (2.0 * theta - k * phase).sin_cos();
            dx += a * s / (detuning * detuning);
            dv += a * c / detuning;
        }
        (dx, dv)
    }

    pub fn coords(&self, state: &SpinState) -> PendulumCoords {
        let phase = self.orbit_phase(state.t);
        let (mut x, mut v) = (state.theta, state.theta_dot);
        for _ in 0..4 {
            let (dx, dv) = self.forced(x, v, phase);
            x = state.theta - dx;
            v = state.theta_dot - dv;
        }
        let psi = wrap_angle(2.0 * x - self.j as f64 * phase + self.shift);
        let u = v - self.center();
        PendulumCoords { energy: u * u - self.c * psi.cos(), u, psi }
    }

    fn modulus(&self, energy: f64) -> f64 {
        2.0 * self.c / (energy + self.c)
    }

    /// Circulation period of `ψ` at energy `E > c`.
    pub fn circulation_period(&self, energy: f64) -> f64 {
        2.0 * complete_k(self.modulus(energy)) / (energy + self.c).sqrt()
    }

    /// Angle variable in `[−π, π]`, advancing uniformly at `2π / T(E)`.
    pub fn angle_of(&self, p: &PendulumCoords) -> f64 {
        let m = self.modulus(p.energy);
        p.u.signum() * PI * incomplete_f(0.5 * p.psi, m) / complete_k(m)
    }

    /// Physical state at `(E, branch, angle)` and time `t`.
    pub fn state(&self, energy: f64, branch: f64, angle: f64, t: f64) -> SpinState {
        let m = self.modulus(energy);
        let psi = branch * 2.0 * jacobi_am(angle * complete_k(m) / PI, m);
        let u = branch * (energy + self.c * psi.cos()).max(0.0).sqrt();
        let phase = self.orbit_phase(t);
        let x = 0.5 * (psi - self.shift + self.j as f64 * phase);
        let v = self.center() + u;
        let (dx, dv) = self.forced(x, v, phase);
        SpinState::new((x + dx).rem_euclid(PI), v + dv, t)
    }

    /// Orbit-averaged `dE/dt` on the branch `sign(u) = branch`.
    pub fn mean_drift(&self, energy: f64, branch: f64, model: &SpinModel, rule: &GaussLegendre) -> f64 {
        let p = model.params();
        let strength = p.lambda * p.eta;
        if strength == 0.0 {
            return 0.0;
        }
        let centre = self.center();
        let half = rule.integrate(0.0, PI, |psi| {
            let u = branch * (energy + self.c * psi.cos()).max(0.0).sqrt();
            model.tidal_f(centre + u)
        });
        -branch * strength * 2.0 * half / self.circulation_period(energy)
    }

    /// Periodic part of the energy within one circulation: the instantaneous
    /// energy at `angle` minus the cycle mean carried by the averaged flow.
    /// Dropping it at the hand-off skews where in the last tidal decrement
    /// the orbit meets the separatrix, and with it the capture odds.
    pub fn drift_offset(&self, energy: f64, branch: f64, angle: f64, model: &SpinModel, rule: &GaussLegendre) -> f64 {
        let p = model.params();
        let strength = p.lambda * p.eta;
        if strength == 0.0 || angle == 0.0 {
            return 0.0;
        }
        let m = self.modulus(energy);
        let swept = 2.0 * jacobi_am(angle * complete_k(m) / PI, m);
        let centre = self.center();
        let tide = rule.integrate(0.0, swept, |psi| {
            let u = branch * (energy + self.c * psi.cos()).max(0.0).sqrt();
            model.tidal_f(centre + u)
        });
        let mean = self.mean_drift(energy, branch, model, rule);
        -branch * strength * tide - mean * angle * self.circulation_period(energy) / TAU
    }

    /// Energy margin above the separatrix at which full integration takes over.
    pub fn band(&self, energy: f64, drift: f64, cfg: &MultiscaleConfig) -> f64 {
        cfg.band_fraction * self.c + cfg.band_cycles * drift.abs() * self.circulation_period(energy)
    }

    /// Energy beyond which the neighbouring resonance becomes home.
    fn switch_energy(&self) -> f64 {
        let quarter = 0.25 * self.n;
        1.02 * quarter * quarter + self.c
    }
}

/// Averaged flow of `[E, angle]` on a fixed branch.
struct AveragedFlow<'a> {
    frame: &'a Frame,
    model: &'a SpinModel,
    rule: &'a GaussLegendre,
    cfg: &'a MultiscaleConfig,
    branch: f64,
    min_step: f64,
}

impl OdeSystem<2> for AveragedFlow<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 2]) -> [f64; 2] {
        let energy = y[0].max(self.frame.c * (1.0 + 1e-9) + 1e-300);
        [
            self.frame.mean_drift(energy, self.branch, self.model, self.rule),
            TAU / self.frame.circulation_period(energy),
        ]
    }

    fn magnitude(&self, y: &[f64; 2]) -> [f64; 2] {
        [y[0].abs().max(self.frame.c).max(1e-6), 1.0]
    }

    fn step_cap(&self, _t: f64, y: &[f64; 2]) -> f64 {
        let energy = y[0];
        if energy <= self.frame.c {
            return self.min_step;
        }
        let drift = self.frame.mean_drift(energy, self.branch, self.model, self.rule);
        if drift == 0.0 {
            return f64::INFINITY;
        }
        let gap = if drift < 0.0 {
            energy - self.frame.c - self.frame.band(energy, drift, self.cfg)
        } else {
            self.frame.switch_energy() - energy
        };
        (0.5 * gap / drift.abs()).max(self.min_step)
    }
}

enum Leg {
    Full(SpinState),
    Averaged { state: SpinState, frame: Frame, coords: PendulumCoords },
    Locked(Lock),
    Timeout,
}

/// Follow `start` until the lock rule fires or `settings.max_time` elapses.
pub(crate) fn follow(
    start: SpinState,
    propagation: &Propagation,
    settings: &FollowSettings,
    integrator: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<Followed, IntegrationError> {
    let t_end = start.t + settings.max_time;
    let model = SpinModel::new(params);
    let system = SpinSystem::new(params, integrator);
    let mut full_periods = 0u64;
    let ms = match propagation {
        Propagation::Multiscale(cfg) => Some((*cfg, GaussLegendre::new(cfg.averaging_nodes))),
        Propagation::Direct => None,
    };
    let mut leg = match &ms {
        Some((cfg, rule)) => classify_leg(start, cfg, 1.0, &model, rule),
        None => Leg::Full(start),
    };
    loop {
        leg = match leg {
            Leg::Locked(lock) => return Ok(Followed { lock: Some(lock), full_periods }),
            Leg::Timeout => return Ok(Followed { lock: None, full_periods }),
            Leg::Full(state) => {
                let release = ms.as_ref().map(|(cfg, rule)| (cfg, rule, &model));
                full_leg(state, t_end, &system, release, settings, integrator, &mut full_periods)?
            }
            Leg::Averaged { state, frame, coords } => {
                let (cfg, rule) = ms.as_ref().expect("averaged legs need a multiscale config");
                averaged_leg(state, frame, coords, t_end, cfg, rule, &model)?
            }
        };
    }
}

/// Choose the propagation for `state`; `band_scale` widens the band on release.
fn classify_leg(
    state: SpinState,
    cfg: &MultiscaleConfig,
    band_scale: f64,
    model: &SpinModel,
    rule: &GaussLegendre,
) -> Leg {
    let frame = Frame::nearest(state.theta_dot, model.params());
    let coords = frame.coords(&state);
    if coords.energy <= frame.c || coords.u == 0.0 {
        return Leg::Full(state);
    }
    let drift = frame.mean_drift(coords.energy, coords.u.signum(), model, rule);
    if coords.energy - frame.c > band_scale * frame.band(coords.energy, drift, cfg) {
        Leg::Averaged { state, frame, coords }
    } else {
        Leg::Full(state)
    }
}

fn full_leg(
    start: SpinState,
    t_end: f64,
    system: &SpinSystem,
    release: Option<(&MultiscaleConfig, &GaussLegendre, &SpinModel)>,
    settings: &FollowSettings,
    integrator: &IntegratorConfig,
    full_periods: &mut u64,
) -> Result<Leg, IntegrationError> {
    let params = system.model().params();
    let period = params.period();
    let mut prop = Propagator::new(system, start, t_end + 2.0 * period, integrator);
    let mut monitor = LockMonitor::new(settings.delta, settings.lock_periods, params.n);
    let mut k = (start.t / period).floor() as i64 + 1;
    let mut since_check = 0u32;
    loop {
        let t = k as f64 * period;
        if t > t_end {
            return Ok(Leg::Timeout);
        }
        let state = prop.sample(t)?;
        *full_periods += 1;
        k += 1;
        if let Some(lock) = monitor.observe(&state) {
            return Ok(Leg::Locked(lock));
        }
        if let Some((cfg, rule, model)) = release {
            since_check += 1;
            if since_check >= cfg.release_check {
                since_check = 0;
                let leg = classify_leg(state, cfg, cfg.exit_factor, model, rule);
                if matches!(leg, Leg::Averaged { .. }) {
                    return Ok(leg);
                }
            }
        }
    }
}

fn averaged_leg(
    state: SpinState,
    frame: Frame,
    coords: PendulumCoords,
    t_end: f64,
    cfg: &MultiscaleConfig,
    rule: &GaussLegendre,
    model: &SpinModel,
) -> Result<Leg, IntegrationError> {
    let period = model.params().period();
    let branch = coords.u.signum();
    let flow = AveragedFlow { frame: &frame, model, rule, cfg, branch, min_step: 20.0 * period };
    let ctl = StepControl { rel_tol: cfg.rel_tol, abs_tol: 1e-12, ..StepControl::default() };
    let angle = frame.angle_of(&coords);
    let mean_energy = coords.energy - frame.drift_offset(coords.energy, branch, angle, model, rule);
    let mut solver = Dop853::new(&flow, state.t, [mean_energy, angle], ctl);
    let instantaneous = |energy: f64, angle: f64| energy + frame.drift_offset(energy, branch, angle, model, rule);
    loop {
        let t = solver.step(t_end)?;
        let [energy, angle] = *solver.y();
        if energy > frame.switch_energy() {
            let state = frame.state(instantaneous(energy, angle), branch, angle, t);
            return Ok(Leg::Full(state).rehome(cfg, model, rule));
        }
        if energy > frame.c {
            let drift = frame.mean_drift(energy, branch, model, rule);
            if energy - frame.c >= frame.band(energy, drift, cfg) {
                if t >= t_end {
                    return Ok(Leg::Timeout);
                }
                continue;
            }
        }
        let energy = instantaneous(energy.max(frame.c * (1.0 + 1e-12)), angle).max(frame.c * (1.0 + 1e-12));
        return Ok(Leg::Full(frame.state(energy, branch, angle, t)));
    }
}

impl Leg {
    /// Re-enter through the physical state after crossing into a new home resonance.
    fn rehome(self, cfg: &MultiscaleConfig, model: &SpinModel, rule: &GaussLegendre) -> Leg {
        match self {
            Leg::Full(state) => classify_leg(state, cfg, 1.0, model, rule),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_round_trip() {
        let p = PhysicalParams::default();
        let frame = Frame::new(3, &p);
        for &(theta, v) in &[(0.3, 1.56 * p.n), (2.0, 1.44 * p.n), (1.1, 1.7 * p.n)] {
            let s = SpinState::new(theta, v, 1234.567);
            let c = frame.coords(&s);
            let back = frame.state(c.energy, c.u.signum(), frame.angle_of(&c), s.t);
            let dtheta = wrap_angle(2.0 * (back.theta - s.theta)) / 2.0;
            assert!(dtheta.abs() < 1e-9, "theta {theta}: {dtheta}");
            assert!((back.theta_dot - v).abs() < 1e-9 * p.n);
        }
    }

    #[test]
    fn free_rotor_energy_is_constant_without_tide() {
        let mut p = PhysicalParams::default();
        p.lambda = 0.0;
        let frame = Frame::new(5, &p);
        let model = SpinModel::new(&p);
        let rule = GaussLegendre::new(24);
        assert_eq!(frame.mean_drift(10.0, 1.0, &model, &rule), 0.0);
    }

    #[test]
    fn energy_offset_is_periodic_and_odd() {
        let p = PhysicalParams::default();
        let frame = Frame::new(4, &p);
        let model = SpinModel::new(&p);
        let rule = GaussLegendre::new(24);
        let energy = 1.05 * frame.c;
        let decrement = frame.mean_drift(energy, 1.0, &model, &rule) * frame.circulation_period(energy);
        for branch in [1.0, -1.0] {
            assert!(frame.drift_offset(energy, branch, PI, &model, &rule).abs() < 1e-6 * decrement.abs());
            for angle in [0.3, 1.7, 2.9] {
                let ahead = frame.drift_offset(energy, branch, angle, &model, &rule);
                let behind = frame.drift_offset(energy, branch, -angle, &model, &rule);
                assert!((ahead + behind).abs() < 1e-9 * decrement.abs());
                assert!(ahead.abs() < decrement.abs());
            }
        }
    }

    #[test]
    fn tide_drains_energy_above_the_three_halves_resonance() {
        let p = PhysicalParams::default();
        let frame = Frame::new(3, &p);
        let model = SpinModel::new(&p);
        let rule = GaussLegendre::new(24);
        let u = 0.1 * p.n;
        assert!(frame.mean_drift(u * u, 1.0, &model, &rule) < 0.0);
    }
}
