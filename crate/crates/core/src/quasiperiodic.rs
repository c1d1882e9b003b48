//! Quasi-periodic 3:2 attractor: second-order normal form, the slow frequency
//! from spectra of integrated trajectories, and parameter scans across the
//! Hopf transition.
//!
//! Libration is measured by `ξ = 2(θ − 3nt/2)`. The tidal term enters through
//! `Φ(ξ̇) = F((3n + ξ̇)/2)`, which has a steep kink at `ξ̇ = 0`; every average
//! of `Φ` is split at the kink crossings before quadrature.

use crate::attractors::{picard_first, AttractorError, Resonance};
use crate::integrator::{
    integrate, IntegrationError, IntegratorConfig, Propagator, Sampling, SpinSystem, Trajectory,
};
use crate::model::{PhysicalParams, SpinModel, SpinState, K_MAX, K_MIN, K_PRINCIPAL};
use crate::quadrature::{adaptive_composite, GaussLegendre};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    NoRoot { lo: f64, hi: f64 },
    PeakNotFound,
    BadSampling(String),
    Integration(IntegrationError),
    Attractor(AttractorError),
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoRoot { lo, hi } => write!(f, "I2 has no sign change on [{lo:e}, {hi:e}]"),
            Self::PeakNotFound => write!(f, "no spectral peak below n/2 exceeds 5x the median"),
            Self::BadSampling(msg) => write!(f, "unsuitable trajectory: {msg}"),
            Self::Integration(e) => write!(f, "{e}"),
            Self::Attractor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for QpError {}

impl From<IntegrationError> for QpError {
    fn from(e: IntegrationError) -> Self {
        Self::Integration(e)
    }
}

impl From<AttractorError> for QpError {
    fn from(e: AttractorError) -> Self {
        Self::Attractor(e)
    }
}

/// First-order constants, with the slow frequency set to the pendulum frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    /// `√(2ζA₃)`, rad/yr.
    pub omega: f64,
    /// Perturbation size `ε = ζ`.
    pub epsilon: f64,
    /// `Σ B_i (in)/((in)² − ω²)`.
    pub b_sum: f64,
    pub rho: f64,
    /// `(i, −2εB_i/((in)² − ω²))`, the sine coefficients of `β`.
    pub beta_harmonics: Vec<(i32, f64)>,
    /// Sup norm of `β`, sampled.
    pub beta_sup: f64,
    n: f64,
}

impl NormalForm {
    /// `β(ψ)`, the forced libration in `ξ`.
    pub fn beta(&self, psi: f64) -> f64 {
        self.beta_harmonics.iter().map(|&(i, c)| c * (i as f64 * psi).sin()).sum()
    }

    /// `b(ψ)` with `b(nt) = d/dt β(nt)`.
    pub fn b(&self, psi: f64) -> f64 {
        self.beta_harmonics
            .iter()
            .map(|&(i, c)| c * i as f64 * self.n * (i as f64 * psi).cos())
            .sum()
    }
}

/// Harmonics `(i, B_i)` with `B_i = A_{i+3}` scaled by the sideband factor.
fn sideband_coeffs(params: &PhysicalParams) -> Vec<(i32, f64)> {
    (K_MIN..=K_MAX)
        .filter(|&k| k != K_PRINCIPAL)
        .map(|k| (k - K_PRINCIPAL, params.effective_coeff(k)))
        .filter(|&(_, b)| b != 0.0)
        .collect()
}

fn pendulum_frequency(params: &PhysicalParams) -> f64 {
    (2.0 * params.zeta * params.coeff(K_PRINCIPAL)).sqrt()
}

pub fn normal_form(params: &PhysicalParams) -> NormalForm {
    let n = params.n;
    let omega = pendulum_frequency(params);
    let eps = params.zeta;
    let coeffs = sideband_coeffs(params);
    let denom = |i: i32| (i as f64 * n).powi(2) - omega * omega;
    let b_sum = coeffs.iter().map(|&(i, b)| b * i as f64 * n / denom(i)).sum();
    let model = SpinModel::new(params);
    let rho = 2.0 * params.gamma * eps * model.tidal_f(1.5 * n) / (omega * omega);
    let beta_harmonics: Vec<(i32, f64)> =
        coeffs.iter().map(|&(i, b)| (i, -2.0 * eps * b / denom(i))).collect();
    let mut nf = NormalForm { omega, epsilon: eps, b_sum, rho, beta_harmonics, beta_sup: 0.0, n };
    nf.beta_sup = (0..4096)
        .map(|j| nf.beta(2.0 * PI * j as f64 / 4096.0).abs())
        .fold(0.0, f64::max);
    nf
}

/// `Φ` and the quadrature machinery shared by the solvability integrals.
pub struct KinkAverager {
    model: SpinModel,
    nf: NormalForm,
    rule: GaussLegendre,
    /// Absolute tolerance on one `ψ₁` average.
    pub inner_tol: f64,
}

impl KinkAverager {
    pub fn new(params: &PhysicalParams) -> Self {
        Self {
            model: SpinModel::new(params),
            nf: normal_form(params),
            rule: GaussLegendre::new(8),
            inner_tol: 1e-12,
        }
    }

    pub fn normal_form(&self) -> &NormalForm {
        &self.nf
    }

    /// `Φ(ξ̇) = F((3n + ξ̇)/2)`.
    pub fn phi(&self, xi_dot: f64) -> f64 {
        self.model.tidal_f(0.5 * (3.0 * self.nf.n + xi_dot))
    }

    /// `(1/2π) ∫ cos ψ Φ(amp cos ψ + offset) dψ`.
    pub fn cos_average(&self, amp: f64, offset: f64) -> f64 {
        if amp == 0.0 {
            return 0.0;
        }
        if amp < 0.0 {
            // shift ψ by π
            return -self.cos_average(-amp, offset);
        }
        // the integrand is even about ψ = 0, so half the circle suffices
        let mut cuts = vec![0.0, PI];
        for k in 1..=9 {
            let c = ((k - K_PRINCIPAL) as f64 * self.nf.n - offset) / amp;
            if c.abs() < 1.0 {
                cuts.push(c.acos());
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive_composite(&self.rule, w[0], w[1], 2, self.inner_tol, 48, |psi| {
                psi.cos() * self.phi(amp * psi.cos() + offset)
            });
        }
        total / PI
    }

    /// First solvability integral `I₁(C₀)`.
    pub fn i1(&self, c0: f64) -> f64 {
        self.cos_average(c0 * self.nf.omega, 0.0)
    }

    /// Second solvability integral `I₂(a)` on the torus, with composite
    /// Gauss-Legendre in `ψ₂` doubled until two estimates agree within `tol`.
    pub fn i2(&self, a: f64, tol: f64) -> f64 {
        if a < 0.0 {
            return -self.i2(-a, tol);
        }
        if a == 0.0 {
            return 0.0;
        }
        let outer = |panels: usize| {
            // b is even, so ψ₂ ∈ [0, π] covers the torus
            let h = PI / panels as f64;
            let mut s = 0.0;
            for p in 0..panels {
                let lo = p as f64 * h;
                s += self.rule.integrate(lo, lo + h, |psi2| self.cos_average(a, self.nf.b(psi2)));
            }
            s / PI
        };
        let mut panels = 8;
        let mut prev = outer(panels);
        loop {
            panels *= 2;
            let next = outer(panels);
            if (next - prev).abs() < tol || panels >= 1 << 12 {
                return next;
            }
            prev = next;
        }
    }

    /// `I₂(a)` as the long-time average of `cos ωt Φ(a cos ωt + b(nt))`,
    /// with midpoint sampling over `slow_periods` periods of `2π/ω`.
    pub fn i2_time_average(&self, a: f64, slow_periods: usize, per_fast_period: usize) -> f64 {
        let omega = self.nf.omega;
        let horizon = slow_periods as f64 * 2.0 * PI / omega;
        // a step incommensurate with 2π/n spreads the fast phase over the circle
        let dt = 2.0 * PI / self.nf.n / (per_fast_period as f64 + 0.5 * (5f64.sqrt() - 1.0));
        let steps = (horizon / dt).ceil() as usize;
        let mut s = 0.0;
        for j in 0..steps {
            let t = (j as f64 + 0.5) * dt;
            let c = (omega * t).cos();
            s += c * self.phi(a * c + self.nf.b(self.nf.n * t));
        }
        s / steps as f64
    }
}

pub fn i1(c0: f64, params: &PhysicalParams) -> f64 {
    KinkAverager::new(params).i1(c0)
}

/// Default torus-quadrature tolerance for `I₂`.
pub const I2_TOL: f64 = 1e-9;

pub fn i2(a: f64, params: &PhysicalParams) -> f64 {
    KinkAverager::new(params).i2(a, I2_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpConstruction {
    pub omega: f64,
    pub omega_l: f64,
    pub mu: f64,
    pub epsilon: f64,
    /// Nonzero root of `I₂`, rad/yr.
    pub a_root: f64,
    pub c1: f64,
    pub alpha: f64,
    pub b_sum: f64,
    pub rho: f64,
    pub beta_harmonics: Vec<(i32, f64)>,
    pub beta_sup: f64,
    pub d_sum: f64,
    /// `C₁` implied by the root `a = 0`; it leaves `μ` undetermined and is not used.
    pub c1_trivial_root: f64,
    /// `(i, ε B_i / ((in)² − ω²))`, amplitudes of the forced libration in `z`.
    forced: Vec<(i32, f64)>,
    n: f64,
}

/// Bracket bounds for the nonzero root of `I₂`, rad/yr.
pub const ROOT_SEARCH: (f64, f64) = (1e-4, 2e-2);

pub fn solve_construction(params: &PhysicalParams) -> Result<QpConstruction, QpError> {
    let avg = KinkAverager::new(params);
    let nf = avg.normal_form().clone();
    let a_root = find_i2_root(&avg, ROOT_SEARCH.0, ROOT_SEARCH.1)?;
    let two_eps_b = 2.0 * nf.epsilon * nf.b_sum;
    let c1 = (a_root - two_eps_b) / nf.omega;
    let alpha = c1 + two_eps_b / nf.omega;
    let n = params.n;
    let coeffs = sideband_coeffs(params);
    let lookup = |i: i32| coeffs.iter().find(|&&(j, _)| j == i).map_or(0.0, |&(_, b)| b);
    let d_sum = coeffs
        .iter()
        .map(|&(i, b)| b * (b - lookup(-i)) / ((i as f64 * n).powi(2) - nf.omega * nf.omega))
        .sum::<f64>();
    let a3 = params.coeff(K_PRINCIPAL);
    let mu = a3 * alpha * alpha / 4.0 + 2.0 * nf.epsilon * d_sum;
    let omega_l = (nf.omega * nf.omega - mu * nf.epsilon).sqrt();
    let forced = coeffs
        .iter()
        .map(|&(i, b)| (i, nf.epsilon * b / ((i as f64 * n).powi(2) - nf.omega * nf.omega)))
        .collect();
    Ok(QpConstruction {
        omega: nf.omega,
        omega_l,
        mu,
        epsilon: nf.epsilon,
        a_root,
        c1,
        alpha,
        b_sum: nf.b_sum,
        rho: nf.rho,
        beta_harmonics: nf.beta_harmonics,
        beta_sup: nf.beta_sup,
        d_sum,
        c1_trivial_root: -two_eps_b / nf.omega,
        forced,
        n,
    })
}

/// Sign-change bracket on a log grid, then bisection to `1e-8` relative.
fn find_i2_root(avg: &KinkAverager, lo: f64, hi: f64) -> Result<f64, QpError> {
    const GRID: usize = 24;
    let ratio = (hi / lo).powf(1.0 / GRID as f64);
    let mut x0 = lo;
    let mut f0 = avg.i2(x0, I2_TOL);
    for j in 1..=GRID {
        let x1 = if j == GRID { hi } else { lo * ratio.powi(j as i32) };
        let f1 = avg.i2(x1, I2_TOL);
        if f0 == 0.0 {
            return Ok(x0);
        }
        if f0.signum() != f1.signum() {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            while (b - a) > 1e-8 * b {
                let m = 0.5 * (a + b);
                let fm = avg.i2(m, I2_TOL);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    Err(QpError::NoRoot { lo, hi })
}

/// `(z, ż/n)` of the analytic attractor at time `t`, with `ω_L` set to `ω`.
pub fn qp_waveform(c: &QpConstruction, t: f64) -> (f64, f64) {
    let half = 0.5 * c.alpha;
    let mut z = half * (c.omega * t).sin();
    let mut zdot = half * c.omega * (c.omega * t).cos();
    for &(i, coef) in &c.forced {
        let freq = i as f64 * c.n;
        z -= coef * (freq * t).cos();
        zdot += coef * freq * (freq * t).sin();
    }
    (z, zdot / c.n)
}

/// Same as [`qp_waveform`] but with the forced part written as the sine
/// series obtained from `β(nt)/2`.
pub fn qp_waveform_sine_phase(c: &QpConstruction, t: f64) -> (f64, f64) {
    let half = 0.5 * c.alpha;
    let mut z = half * (c.omega * t).sin();
    let mut zdot = half * c.omega * (c.omega * t).cos();
    for &(i, coef) in &c.forced {
        let freq = i as f64 * c.n;
        z -= coef * (freq * t).sin();
        zdot -= coef * freq * (freq * t).cos();
    }
    (z, zdot / c.n)
}

/// JSON object with every construction field; harmonics keyed by index.
pub fn construction_json(c: &QpConstruction) -> String {
    let harmonics = c
        .beta_harmonics
        .iter()
        .map(|(i, v)| format!("\"{i}\": {v:e}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "{{\n  \"omega\": {:e},\n  \"omega_L\": {:e},\n  \"mu\": {:e},\n  \"mu_epsilon\": {:e},\n  \"a_root\": {:e},\n  \"C1\": {:e},\n  \"alpha\": {:e},\n  \"B\": {:e},\n  \"two_eps_B_over_omega\": {:e},\n  \"rho\": {:e},\n  \"beta_harmonics\": {{{harmonics}}},\n  \"beta_sup\": {:e},\n  \"D\": {:e},\n  \"trivial_root\": {{\"a\": 0.0, \"C1\": {:e}, \"physical\": false}}\n}}\n",
        c.omega,
        c.omega_l,
        c.mu,
        c.mu * c.epsilon,
        c.a_root,
        c.c1,
        c.alpha,
        c.b_sum,
        2.0 * c.epsilon * c.b_sum / c.omega,
        c.rho,
        c.beta_sup,
        c.d_sum,
        c.c1_trivial_root
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Angular frequencies, rad/yr.
    pub freq: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Interpolated locations of prominent local maxima, ascending.
    pub peaks: Vec<f64>,
    /// Dominant peak below `n/2`, rad/yr.
    pub omega_l: f64,
}

impl Spectrum {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "freq,magnitude")?;
        for (f, m) in self.freq.iter().zip(&self.magnitude) {
            writeln!(out, "{f:.10e},{m:.10e}")?;
        }
        Ok(())
    }

    /// Largest magnitude within `half_width` of `freq`.
    pub fn magnitude_near(&self, freq: f64, half_width: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.magnitude)
            .filter(|(f, _)| (**f - freq).abs() <= half_width)
            .map(|(_, m)| *m)
            .fold(0.0, f64::max)
    }

    pub fn median_magnitude(&self) -> f64 {
        median(&self.magnitude)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Minimum number of uniform samples accepted by [`extract_frequency`].
pub const MIN_SPECTRUM_SAMPLES: usize = 1 << 18;

/// Hann-windowed FFT of `θ̇` and the dominant peak below `n/2`.
pub fn extract_frequency(traj: &Trajectory, params: &PhysicalParams) -> Result<Spectrum, QpError> {
    let dt = match traj.sampling {
        Sampling::Uniform(dt) => dt,
        _ => return Err(QpError::BadSampling("uniform sampling required".into())),
    };
    if dt > params.period() / 16.0 * (1.0 + 1e-12) {
        return Err(QpError::BadSampling(format!("step {dt} exceeds T0/16")));
    }
    // the closing sample lands off the grid
    let values: Vec<f64> = traj.samples.iter().map(|s| s.theta_dot).collect();
    let len = values.len() - 1;
    if len < MIN_SPECTRUM_SAMPLES {
        return Err(QpError::BadSampling(format!("{len} samples, need {MIN_SPECTRUM_SAMPLES}")));
    }
    spectrum_of(&values[..len], dt, params.n)
}

/// Spectrum of a uniformly sampled real signal.
pub fn spectrum_of(values: &[f64], dt: f64, n: f64) -> Result<Spectrum, QpError> {
    let len = values.len();
    let mean = values.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / len as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let bins = len / 2 + 1;
    let df = 2.0 * PI / (len as f64 * dt);
    let scale = 4.0 / len as f64;
    let magnitude: Vec<f64> = buf[..bins].iter().map(|c| c.norm() * scale).collect();
    let freq: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    let med = median(&magnitude);
    let refine = |k: usize| {
        let (l, c, r) = (magnitude[k - 1].ln(), magnitude[k].ln(), magnitude[k + 1].ln());
        let den = l - 2.0 * c + r;
        let shift = if den != 0.0 { 0.5 * (l - r) / den } else { 0.0 };
        (k as f64 + shift) * df
    };
    let is_max = |k: usize| magnitude[k] > magnitude[k - 1] && magnitude[k] >= magnitude[k + 1];
    let below = (0.5 * n / df).floor() as usize;
    let dominant = (2..below.min(bins - 1))
        .filter(|&k| is_max(k) && magnitude[k] > 5.0 * med)
        .max_by(|&a, &b| magnitude[a].total_cmp(&magnitude[b]))
        .ok_or(QpError::PeakNotFound)?;
    let floor = magnitude[dominant] * 1e-3;
    let peaks = (2..bins - 1)
        .filter(|&k| is_max(k) && magnitude[k] > floor.max(100.0 * med))
        .map(refine)
        .collect();
    Ok(Spectrum { omega_l: refine(dominant), freq, magnitude, peaks })
}

/// Symmetric Hausdorff distance between two planar point sets.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let directed = |p: &[(f64, f64)], q: &[(f64, f64)]| {
        p.iter()
            .map(|&(x, y)| {
                q.iter().map(|&(u, v)| (x - u).hypot(y - v)).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Largest pairwise distance within a point set.
pub fn diameter(a: &[(f64, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, &(x, y)) in a.iter().enumerate() {
        for &(u, v) in &a[i + 1..] {
            d = d.max((x - u).hypot(y - v));
        }
    }
    d
}

/// Stroboscopic `(z, ż/n)` points of the analytic waveform at `t = kT₀`.
pub fn analytic_section(c: &QpConstruction, count: usize) -> Vec<(f64, f64)> {
    let period = 2.0 * PI / c.n;
    (0..count).map(|k| qp_waveform(c, k as f64 * period)).collect()
}

/// Initial state on the analytic torus. The sine-phase form is used because it
/// solves the first-order equation at `t = 0`; the cosine form starts near the
/// unstable fixed point on the section.
pub fn attractor_start(c: &QpConstruction, params: &PhysicalParams) -> SpinState {
    let (z0, v0) = qp_waveform_sine_phase(c, 0.0);
    SpinState::new(z0, params.n * (1.5 + v0), 0.0)
}

/// Stroboscopic `(z, ż/n)` about the 3:2 ratio of a numerically integrated trajectory
/// that starts on the analytic curve, after `transient` periods.
pub fn numerical_section(
    c: &QpConstruction,
    transient: u64,
    count: usize,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<Vec<(f64, f64)>, QpError> {
    let n = params.n;
    let start = attractor_start(c, params);
    let sys = SpinSystem::new(params, cfg);
    let period = params.period();
    let horizon = (transient + count as u64) as f64 * period;
    let mut prop = Propagator::new(&sys, start, horizon, cfg);
    let mut out = Vec::with_capacity(count);
    for k in 0..count as u64 {
        let t = (transient + k) as f64 * period;
        let s = if t == 0.0 { start } else { prop.sample(t)? };
        out.push(crate::integrator::libration(&s, 1.5, params));
    }
    Ok(out.into_iter().map(|(z, zdot)| (z, zdot / n)).collect())
}

/// Uniformly sampled trajectory on the numerical 3:2 attractor.
pub fn attractor_trajectory(
    c: &QpConstruction,
    transient_periods: u64,
    record_periods: u64,
    per_period: u32,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<Trajectory, QpError> {
    let period = params.period();
    let start = attractor_start(c, params);
    let settled = if transient_periods > 0 {
        *integrate(start, transient_periods as f64 * period, Sampling::Endpoints, cfg, params)?
            .last()
    } else {
        start
    };
    let dt = period / per_period as f64;
    let t_end = settled.t + record_periods as f64 * period + 0.5 * dt;
    Ok(integrate(settled, t_end, Sampling::Uniform(dt), cfg, params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParameter {
    /// Sideband multiplier `S`.
    Sideband,
    /// Tidal multiplier `λ`.
    Dissipation,
}

impl ScanParameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sideband => "S",
            Self::Dissipation => "lambda",
        }
    }

    fn apply(&self, params: &PhysicalParams, value: f64) -> PhysicalParams {
        let mut p = params.clone();
        match self {
            Self::Sideband => p.sideband = value,
            Self::Dissipation => p.lambda = value,
        }
        p
    }

    fn admissible(&self, value: f64) -> bool {
        match self {
            Self::Sideband => (0.0..=1.0).contains(&value),
            Self::Dissipation => value >= 1.0 && value.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub transient_periods: u64,
    pub recorded: usize,
    /// Initial offset of `θ̇/n` from the Picard seed, kicking the orbit off the fixed point.
    pub kick: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            transient_periods: 50_000,
            recorded: 200,
            kick: 5e-5,
            // the loose survey profile leaves a 1e-6 noise floor in θ̇/n, above
            // the amplitudes just past the transition
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    /// Stroboscopic samples of `θ̇/n − 3/2`.
    pub samples: Vec<f64>,
    /// Peak-to-peak spread of the samples.
    pub amplitude: f64,
    /// Slow frequency from the mean rotation of the section points, rad/yr.
    pub omega_l: Option<f64>,
}

pub fn bifurcation_scan(
    parameter: ScanParameter,
    values: &[f64],
    cfg: &ScanConfig,
    params: &PhysicalParams,
) -> Result<Vec<ScanPoint>, QpError> {
    if let Some(v) = values.iter().find(|v| !parameter.admissible(**v)) {
        return Err(QpError::BadSampling(format!(
            "{} = {v} outside the admissible range",
            parameter.name()
        )));
    }
    values.par_iter().map(|&v| scan_point(parameter, v, cfg, params)).collect()
}

fn scan_point(
    parameter: ScanParameter,
    value: f64,
    cfg: &ScanConfig,
    params: &PhysicalParams,
) -> Result<ScanPoint, QpError> {
    let p = parameter.apply(params, value);
    let res = Resonance::new(3)?;
    let seed = picard_first(res, &p)?.seed(0, &p);
    let n = p.n;
    let period = p.period();
    let start = SpinState::new(seed.theta, seed.theta_dot + cfg.kick * n, 0.0);
    let sys = SpinSystem::new(&p, &cfg.integrator);
    let horizon = (cfg.transient_periods + cfg.recorded as u64) as f64 * period;
    let mut prop = Propagator::new(&sys, start, horizon, &cfg.integrator);
    let mut section = Vec::with_capacity(cfg.recorded);
    for k in 0..cfg.recorded as u64 {
        let s = prop.sample((cfg.transient_periods + k) as f64 * period)?;
        section.push(crate::integrator::libration(&s, 1.5, &p));
    }
    let samples: Vec<f64> = section.iter().map(|&(_, zdot)| zdot / n).collect();
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ScanPoint { value, amplitude: hi - lo, omega_l: section_rotation(&section, n), samples })
}

/// Mean angular advance per period of section points about their centroid,
/// converted to a frequency; `None` when the points collapse to a fixed point.
fn section_rotation(section: &[(f64, f64)], n: f64) -> Option<f64> {
    let len = section.len() as f64;
    // the bounding box does not depend on how much of the last turn was sampled
    let span = |coord: fn(&(f64, f64)) -> f64| {
        let lo = section.iter().map(coord).fold(f64::INFINITY, f64::min);
        let hi = section.iter().map(coord).fold(f64::NEG_INFINITY, f64::max);
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    };
    let (cz, sz) = span(|p| p.0);
    let (cv, sv) = span(|p| p.1);
    if sz < 1e-9 || sv < 1e-12 {
        return None;
    }
    let angle = |p: &(f64, f64)| ((p.1 - cv) / sv).atan2((p.0 - cz) / sz);
    let mut cumulative = Vec::with_capacity(section.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in section.windows(2) {
        let mut d = angle(&w[1]) - angle(&w[0]);
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        total += d;
        cumulative.push(total.abs());
    }
    // whole revolutions cancel the bias of a tilted or off-centre ellipse
    let turns = (total.abs() / (2.0 * PI)).floor();
    let steps = if turns >= 1.0 {
        let target = turns * 2.0 * PI;
        let j = cumulative.iter().position(|&c| c >= target)?;
        let frac = (target - cumulative[j - 1]) / (cumulative[j] - cumulative[j - 1]);
        (j - 1) as f64 + frac
    } else {
        return Some(total.abs() / (len - 1.0) * n / (2.0 * PI));
    };
    Some(turns * n / steps)
}

pub fn write_scan_csv<W: Write>(mut out: W, points: &[ScanPoint]) -> io::Result<()> {
    writeln!(out, "param,value_index,thetadot_over_n_minus_1_5")?;
    for p in points {
        for (j, v) in p.samples.iter().enumerate() {
            writeln!(out, "{},{j},{v:.10e}", p.value)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfFit {
    pub a0: f64,
    pub s0: f64,
    pub kappa: f64,
    pub points_used: usize,
    pub rms_log_residual: f64,
}

/// Fit `A = A₀ (S − S₀)^κ` to the `leftmost` points whose amplitude exceeds
/// `threshold`, scanning `S₀` between the last quiet value and the first active one.
pub fn fit_hopf(points: &[ScanPoint], threshold: f64, leftmost: usize) -> Option<HopfFit> {
    let mut sorted: Vec<&ScanPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let first_active = sorted.iter().position(|p| p.amplitude > threshold)?;
    let active: Vec<(f64, f64)> = sorted[first_active..]
        .iter()
        .take(leftmost)
        .map(|p| (p.value, p.amplitude))
        .collect();
    if active.len() < 3 {
        return None;
    }
    let upper = active[0].0;
    let lower = if first_active > 0 { sorted[first_active - 1].value } else { upper - 0.1 };
    let regress = |s0: f64| {
        let xy: Vec<(f64, f64)> = active.iter().map(|&(s, a)| ((s - s0).ln(), a.ln())).collect();
        let m = xy.len() as f64;
        let (sx, sy) = xy.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let kappa = sxy / sxx;
        let c = my - kappa * mx;
        let rss: f64 = xy.iter().map(|p| (p.1 - c - kappa * p.0).powi(2)).sum();
        (rss, kappa, c.exp())
    };
    // golden-section search on S₀ in [lower, upper)
    let (mut a, mut b) = (lower, upper - 1e-9 * (upper - lower).max(1e-12));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if regress(x1).0 < regress(x2).0 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let s0 = 0.5 * (a + b);
    let (rss, kappa, a0) = regress(s0);
    Some(HopfFit {
        a0,
        s0,
        kappa,
        points_used: active.len(),
        rms_log_residual: (rss / active.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_is_odd_and_b_is_its_derivative() {
        let nf = normal_form(&PhysicalParams::default());
        for &psi in &[0.3, 1.1, 2.9] {
            assert!((nf.beta(psi) + nf.beta(-psi)).abs() < 1e-18);
            let h = 1e-6;
            let fd = (nf.beta(psi + h) - nf.beta(psi - h)) / (2.0 * h) * nf.n;
            assert!((fd - nf.b(psi)).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_of_a_synthetic_circle() {
        let n = 26.0;
        let step = 0.1;
        let pts: Vec<(f64, f64)> =
            (0..100).map(|k| ((k as f64 * step).cos(), 1e-3 * (k as f64 * step).sin())).collect();
        let w = section_rotation(&pts, n).unwrap();
        assert!((w - step * n / (2.0 * PI)).abs() < 1e-9 * n);
    }

    #[test]
    fn hausdorff_of_shifted_sets() {
        let a = [(0.0, 0.0), (1.0, 0.0)];
        let b = [(0.0, 0.5), (1.0, 0.5)];
        assert!((hausdorff(&a, &b) - 0.5).abs() < 1e-15);
        assert!((diameter(&a) - 1.0).abs() < 1e-15);
    }
}
