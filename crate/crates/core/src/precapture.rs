//! Slow decay of a fast rotator before capture.
//!
//! Away from the kinks the tidal torque is replaced by its tangent line
//! `a − bθ̇`, and the triaxial forcing is treated as a fast, small correction
//! with frequencies `Ω_k`.

use crate::integrator::{IntegrationError, IntegratorConfig, Propagator, SpinSystem};
use crate::model::{PhysicalParams, SpinModel, SpinState};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum PrecaptureError {
    KinkProximity { theta_dot: f64, kink: f64 },
    NoConvergence { iterations: usize },
    Unreachable { theta_dot0: f64, target: f64 },
    Integration(IntegrationError),
}

impl fmt::Display for PrecaptureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KinkProximity { theta_dot, kink } => {
                write!(f, "operating point {theta_dot} rad/yr is within 0.02n of the kink at {kink}")
            }
            Self::NoConvergence { iterations } => {
                write!(f, "Omega iteration did not converge in {iterations} steps")
            }
            Self::Unreachable { theta_dot0, target } => {
                write!(f, "linear decay from {theta_dot0} never reaches {target}")
            }
            Self::Integration(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PrecaptureError {}

impl From<IntegrationError> for PrecaptureError {
    fn from(e: IntegrationError) -> Self {
        Self::Integration(e)
    }
}

/// Tangent line `η F(θ̇) ≈ a − bθ̇` at `operating_point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTidalFit {
    /// yr⁻².
    pub a: f64,
    /// yr⁻¹.
    pub b: f64,
    pub operating_point: f64,
}

impl LinearTidalFit {
    /// Fixed point `a/b` of the linear decay.
    pub fn asymptote(&self) -> f64 {
        self.a / self.b
    }
}

/// Exclusion half-width around each kink, in units of `n`.
pub const KINK_MARGIN: f64 = 0.02;

pub fn fit_linear_tidal(theta_dot_op: f64, params: &PhysicalParams) -> Result<LinearTidalFit, PrecaptureError> {
    let n = params.n;
    let half_turns = (2.0 * theta_dot_op / n).round();
    let kink = 0.5 * half_turns * n;
    if (theta_dot_op - kink).abs() < KINK_MARGIN * n {
        return Err(PrecaptureError::KinkProximity { theta_dot: theta_dot_op, kink });
    }
    let model = SpinModel::new(params);
    let strength = params.lambda * params.eta;
    let b = -strength * model.tidal_f_prime(theta_dot_op);
    let a = strength * model.tidal_f(theta_dot_op) + b * theta_dot_op;
    Ok(LinearTidalFit { a, b, operating_point: theta_dot_op })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecaptureSolution {
    pub theta0: f64,
    pub theta_dot0: f64,
    /// `(k, Ω_k)`, rad/yr.
    pub omega: Vec<(i32, f64)>,
    /// `2θ₀`.
    pub phi: f64,
    /// `θ̇(0) − a/b`.
    pub r: f64,
    /// `max_k |Ω_k − (θ̇(0) − kn)|`.
    pub max_deviation: f64,
    pub iterations: usize,
}

const OMEGA_TOL: f64 = 1e-10;
const OMEGA_MAX_ITER: usize = 100;

/// Fixed-point solution of `Ω_k = θ̇(0) − kn − ζ cos 2θ₀ Σ_j A_j/Ω_j`.
pub fn solve_omega(
    theta0: f64,
    theta_dot0: f64,
    fit: &LinearTidalFit,
    params: &PhysicalParams,
) -> Result<PrecaptureSolution, PrecaptureError> {
    let n = params.n;
    let terms: Vec<(i32, f64)> = params
        .triaxial_indices()
        .into_iter()
        .map(|k| (k, params.effective_coeff(k)))
        .collect();
    let seed: Vec<f64> = terms.iter().map(|&(k, _)| theta_dot0 - k as f64 * n).collect();
    let drive = params.zeta * (2.0 * theta0).cos();
    let mut omega = seed.clone();
    for iteration in 1..=OMEGA_MAX_ITER {
        let shift = -drive * terms.iter().zip(&omega).map(|(&(_, a), w)| a / w).sum::<f64>();
        let next: Vec<f64> = seed.iter().map(|s| s + shift).collect();
        let change = next.iter().zip(&omega).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        omega = next;
        if change < OMEGA_TOL {
            let max_deviation =
                omega.iter().zip(&seed).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            return Ok(PrecaptureSolution {
                theta0,
                theta_dot0,
                omega: terms.iter().map(|t| t.0).zip(omega).collect(),
                phi: 2.0 * theta0,
                r: theta_dot0 - fit.asymptote(),
                max_deviation,
                iterations: iteration,
            });
        }
    }
    Err(PrecaptureError::NoConvergence { iterations: OMEGA_MAX_ITER })
}

/// Largest `|Ω_k − Ω_k^app|` over `samples` initial phases in `[0, π)`.
pub fn max_omega_deviation(
    theta_dot0: f64,
    fit: &LinearTidalFit,
    samples: usize,
    params: &PhysicalParams,
) -> Result<f64, PrecaptureError> {
    let mut worst: f64 = 0.0;
    for j in 0..samples {
        let theta0 = PI * j as f64 / samples as f64;
        worst = worst.max(solve_omega(theta0, theta_dot0, fit, params)?.max_deviation);
    }
    Ok(worst)
}

/// Approximate spin rate at time `t` from the split slow/fast solution.
pub fn thetadot_approx(t: f64, sol: &PrecaptureSolution, fit: &LinearTidalFit, params: &PhysicalParams) -> f64 {
    let growth = (fit.b * t).exp();
    let mut fast = 0.0;
    for &(k, w) in &sol.omega {
        let ratio = params.effective_coeff(k) / w;
        fast += ratio * ((w * t + sol.phi).cos() - growth * sol.phi.cos());
    }
    fit.asymptote() + growth * sol.r + params.zeta * fast
}

/// Time for the slow component to decay from `theta_dot0` to `target`.
pub fn time_to_capture(theta_dot0: f64, target: f64, fit: &LinearTidalFit) -> Result<f64, PrecaptureError> {
    let r = theta_dot0 - fit.asymptote();
    let drop = theta_dot0 - target;
    let unreachable = PrecaptureError::Unreachable { theta_dot0, target };
    if drop < 0.0 || r >= 0.0 {
        return Err(unreachable);
    }
    let ratio = (r - drop) / r;
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(unreachable);
    }
    Ok(ratio.ln() / fit.b)
}

/// Result of following the full model until the spin settles near a target ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureRun {
    /// Start of the first window whose mean `θ̇` lies within `band` of the target.
    pub capture_time: Option<f64>,
    /// `(t, mean θ̇)` per window.
    pub window_means: Vec<(f64, f64)>,
}

/// Integrate the full model from `start`, averaging `θ̇` over windows of
/// `window` periods, until a window mean falls within `band · n` of `target · n`
/// or `max_time` elapses.
pub fn integrate_to_capture(
    start: SpinState,
    target: f64,
    band: f64,
    window: u32,
    max_time: f64,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<CaptureRun, PrecaptureError> {
    let n = params.n;
    let period = params.period();
    let sys = SpinSystem::new(params, cfg);
    let horizon = start.t + max_time + (window as f64 + 1.0) * period;
    let mut prop = Propagator::new(&sys, start, horizon, cfg);
    let per_window = 8 * window as u64;
    let dt = period / 8.0;
    let mut means = Vec::new();
    let mut k = 0u64;
    while (k as f64) * dt <= max_time {
        let t_begin = start.t + k as f64 * dt;
        let mut sum = 0.0;
        for j in 1..=per_window {
            sum += prop.sample(start.t + (k + j) as f64 * dt)?.theta_dot;
        }
        k += per_window;
        let mean = sum / per_window as f64;
        means.push((t_begin, mean));
        if (mean - target * n).abs() < band * n {
            return Ok(CaptureRun { capture_time: Some(t_begin - start.t), window_means: means });
        }
    }
    Ok(CaptureRun { capture_time: None, window_means: means })
}

/// JSON record for one initial condition.
pub fn precapture_json(
    fit: &LinearTidalFit,
    sol: &PrecaptureSolution,
    t_capture: Option<f64>,
    params: &PhysicalParams,
) -> String {
    let omega = sol
        .omega
        .iter()
        .map(|(k, w)| {
            format!(
                "\"{k}\": {{\"omega\": {w:e}, \"omega_app\": {:e}}}",
                sol.theta_dot0 - *k as f64 * params.n
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    let t = t_capture.map_or("null".to_string(), |t| format!("{t:e}"));
    format!(
        "{{\n  \"a\": {:e},\n  \"b\": {:e},\n  \"operating_point\": {:e},\n  \"theta0\": {:e},\n  \"theta_dot0\": {:e},\n  \"R\": {:e},\n  \"t_capture\": {t},\n  \"max_omega_deviation\": {:e},\n  \"omega_table\": {{{omega}}}\n}}\n",
        fit.a, fit.b, fit.operating_point, sol.theta0, sol.theta_dot0, sol.r, sol.max_deviation
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangency_at_operating_point() {
        let p = PhysicalParams::default();
        let op = 1.75 * p.n;
        let fit = fit_linear_tidal(op, &p).unwrap();
        let model = SpinModel::new(&p);
        let eta = p.eta;
        assert!((eta * model.tidal_f(op) - (fit.a - fit.b * op)).abs() < 1e-12);
        assert!((eta * model.tidal_f_prime(op) + fit.b).abs() < 1e-12);
    }

    #[test]
    fn kink_margin_is_enforced() {
        let p = PhysicalParams::default();
        assert!(matches!(
            fit_linear_tidal(1.99 * p.n, &p),
            Err(PrecaptureError::KinkProximity { .. })
        ));
    }
}
