//! Adaptive integration of the spin equation, its tangent flow, and stroboscopic sampling.

mod dop853;
mod tableau;

pub use dop853::{Dop853, OdeSystem, StepControl, StepStats};

use crate::model::{PhysicalParams, SpinModel, SpinState};
use std::fmt;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegrationError {
    StepUnderflow { t: f64, h: f64 },
    NonFinite { t: f64 },
    NonMonotonic { t: f64 },
    BadInterval { t0: f64, t_end: f64 },
}

impl fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StepUnderflow { t, h } => write!(f, "step size {h:e} underflow at t = {t}"),
            Self::NonFinite { t } => write!(f, "non-finite state at t = {t}"),
            Self::NonMonotonic { t } => write!(f, "sample time {t} precedes the current step"),
            Self::BadInterval { t0, t_end } => write!(f, "t_end = {t_end} must exceed t0 = {t0}"),
        }
    }
}

impl std::error::Error for IntegrationError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// yr.
    pub max_step: f64,
    /// Clamp engages when |λ η F'(θ̇)| exceeds this value (yr⁻¹).
    pub kink_slope_threshold: f64,
    /// Step bound near kinks; `None` means `T₀/200`.
    pub clamp_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 1.0,
            kink_slope_threshold: 1.0,
            clamp_step: None,
        }
    }
}

impl IntegratorConfig {
    /// Looser profile used for long Monte-Carlo trajectories.
    pub fn survey() -> Self {
        Self { rel_tol: 1e-7, abs_tol: 1e-9, ..Self::default() }
    }

    pub fn resolved_clamp(&self, params: &PhysicalParams) -> f64 {
        self.clamp_step.unwrap_or(params.period() / 200.0)
    }

    pub fn validate(&self, params: &PhysicalParams) -> Result<(), String> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.resolved_clamp(params) >= self.max_step {
            return Err("clamp_step must be smaller than max_step".into());
        }
        Ok(())
    }

    fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            ..StepControl::default()
        }
    }
}

/// The spin equation as a first-order system in `(θ, θ̇)`.
pub struct SpinSystem {
    model: SpinModel,
    kink_threshold: f64,
    clamp: f64,
    dissipation: f64,
}

impl SpinSystem {
    pub fn new(params: &PhysicalParams, cfg: &IntegratorConfig) -> Self {
        Self {
            model: SpinModel::new(params),
            kink_threshold: cfg.kink_slope_threshold,
            clamp: cfg.resolved_clamp(params),
            dissipation: params.lambda * params.eta,
        }
    }

    pub fn model(&self) -> &SpinModel {
        &self.model
    }

    fn kink_cap(&self, theta_dot: f64) -> f64 {
        if self.dissipation != 0.0
            && (self.dissipation * self.model.tidal_f_prime(theta_dot)).abs()
                > self.kink_threshold
        {
            self.clamp
        } else {
            f64::INFINITY
        }
    }
}

impl OdeSystem<2> for SpinSystem {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.model.acceleration(y[0], y[1], t)]
    }

    fn magnitude(&self, y: &[f64; 2]) -> [f64; 2] {
        // the angle grows without bound, so it is controlled on a fixed scale
        [1.0, y[1].abs().max(self.model.params().n)]
    }

    fn step_cap(&self, _t: f64, y: &[f64; 2]) -> f64 {
        self.kink_cap(y[1])
    }
}

/// State plus row-major tangent matrix `[θ, θ̇, m00, m01, m10, m11]`.
pub struct TangentSystem(SpinSystem);

impl OdeSystem<6> for TangentSystem {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 6]) -> [f64; 6] {
        let (acc, d_theta, d_rate) = self.0.model.acceleration_jacobian(y[0], y[1], t);
        [
            y[1],
            acc,
            y[4],
            y[5],
            d_theta * y[2] + d_rate * y[4],
            d_theta * y[3] + d_rate * y[5],
        ]
    }

    fn magnitude(&self, y: &[f64; 6]) -> [f64; 6] {
        let n = self.0.model.params().n;
        [
            1.0,
            y[1].abs().max(n),
            y[2].abs().max(1.0),
            y[3].abs().max(1.0 / n),
            y[4].abs().max(n),
            y[5].abs().max(1.0),
        ]
    }

    fn step_cap(&self, _t: f64, y: &[f64; 6]) -> f64 {
        self.0.kink_cap(y[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalState {
    pub state: SpinState,
    /// Tangent map `∂(θ, θ̇)(t) / ∂(θ, θ̇)(t₀)`, row-major.
    pub tangent: [[f64; 2]; 2],
}

impl VariationalState {
    pub fn determinant(&self) -> f64 {
        let m = self.tangent;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Every `dt` years from the initial time.
    Uniform(f64),
    /// At integer multiples of `T₀` measured from the initial time.
    Stroboscopic,
    /// Initial and final states only.
    Endpoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sampling: Sampling,
    pub samples: Vec<SpinState>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn last(&self) -> &SpinState {
        self.samples.last().expect("trajectory holds its initial state")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,theta,theta_dot")?;
        for s in &self.samples {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", s.t, s.theta, s.theta_dot)?;
        }
        Ok(())
    }

    /// Libration coordinates `(k, z, ż/n)` about the spin ratio `omega0`.
    pub fn write_strobe_csv<W: Write>(
        &self,
        mut out: W,
        omega0: f64,
        params: &PhysicalParams,
    ) -> io::Result<()> {
        writeln!(out, "k,z,zdot_over_n")?;
        let t0 = self.samples.first().map_or(0.0, |s| s.t);
        for s in &self.samples {
            let k = ((s.t - t0) / params.period()).round() as i64;
            let (z, zdot) = libration(s, omega0, params);
            writeln!(out, "{k},{z:.17e},{:.17e}", zdot / params.n)?;
        }
        Ok(())
    }
}

/// `z = θ − ω₀ n t` reduced to `(−π/2, π/2]`, and `ż = θ̇ − ω₀ n`.
pub fn libration(s: &SpinState, omega0: f64, params: &PhysicalParams) -> (f64, f64) {
    let z = reduce_half_turn(s.theta - omega0 * params.n * s.t);
    (z, s.theta_dot - omega0 * params.n)
}

/// Reduce an angle modulo π into `(−π/2, π/2]`.
pub fn reduce_half_turn(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let r = angle - PI * (angle / PI).round();
    if r <= -PI / 2.0 {
        r + PI
    } else {
        r
    }
}

fn check_interval(t0: f64, t_end: f64) -> Result<(), IntegrationError> {
    if t_end > t0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(IntegrationError::BadInterval { t0, t_end })
    }
}

pub fn integrate(
    state: SpinState,
    t_end: f64,
    sampling: Sampling,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<Trajectory, IntegrationError> {
    check_interval(state.t, t_end)?;
    let sys = SpinSystem::new(params, cfg);
    let mut solver = Dop853::new(&sys, state.t, [state.theta, state.theta_dot], cfg.step_control());
    let mut samples = vec![state];
    let spacing = match sampling {
        Sampling::Uniform(dt) => Some(dt),
        Sampling::Stroboscopic => Some(params.period()),
        Sampling::Endpoints => None,
    };
    if let Some(dt) = spacing {
        let mut k = 1u64;
        loop {
            let t = state.t + k as f64 * dt;
            if t >= t_end {
                break;
            }
            let y = solver.advance_to(t, t_end)?;
            samples.push(SpinState::new(y[0], y[1], t));
            k += 1;
        }
    }
    while solver.t() < t_end {
        solver.step(t_end)?;
    }
    let y = *solver.y();
    samples.push(SpinState::new(y[0], y[1], t_end));
    Ok(Trajectory { sampling, samples, stats: solver.stats() })
}

pub fn integrate_variational(
    state: SpinState,
    t_end: f64,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<VariationalState, IntegrationError> {
    check_interval(state.t, t_end)?;
    let sys = TangentSystem(SpinSystem::new(params, cfg));
    let y0 = [state.theta, state.theta_dot, 1.0, 0.0, 0.0, 1.0];
    let mut solver = Dop853::new(&sys, state.t, y0, cfg.step_control());
    while solver.t() < t_end {
        solver.step(t_end)?;
    }
    let y = *solver.y();
    Ok(VariationalState {
        state: SpinState::new(y[0], y[1], t_end),
        tangent: [[y[2], y[3]], [y[4], y[5]]],
    })
}

/// Flow forward exactly `periods · T₀`.
pub fn stroboscopic_map(
    state: SpinState,
    periods: u32,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<SpinState, IntegrationError> {
    let t_end = state.t + periods as f64 * params.period();
    Ok(*integrate(state, t_end, Sampling::Endpoints, cfg, params)?.last())
}

/// Reusable propagator for long runs sampled at arbitrary increasing times.
pub struct Propagator<'s> {
    solver: Dop853<'s, SpinSystem, 2>,
    horizon: f64,
}

impl<'s> Propagator<'s> {
    pub fn new(sys: &'s SpinSystem, state: SpinState, horizon: f64, cfg: &IntegratorConfig) -> Self {
        Self {
            solver: Dop853::new(sys, state.t, [state.theta, state.theta_dot], cfg.step_control()),
            horizon,
        }
    }

    pub fn sample(&mut self, t: f64) -> Result<SpinState, IntegrationError> {
        let y = self.solver.advance_to(t, self.horizon)?;
        Ok(SpinState::new(y[0], y[1], t))
    }

    pub fn stats(&self) -> StepStats {
        self.solver.stats()
    }
}
