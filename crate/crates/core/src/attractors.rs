//! Periodic p:2 attractors: Picard approximations, Newton refinement on the
//! stroboscopic map, and Floquet classification.

use crate::integrator::{
    integrate_variational, IntegrationError, IntegratorConfig, VariationalState,
};
use crate::model::{PhysicalParams, SpinModel, SpinState, K_MAX, K_MIN};
use crate::quadrature::{adaptive_composite, GaussLegendre};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

/// Numerators of the ten tabulated resonances `p:2`, retrograde first.
pub const TABLE_RESONANCES: [i32; 10] = [-2, -1, 1, 2, 3, 4, 5, 6, 7, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resonance {
    pub p: i32,
    pub q: i32,
}

impl Resonance {
    pub fn new(p: i32) -> Result<Self, AttractorError> {
        if p == 0 || !(K_MIN..=K_MAX).contains(&p) {
            return Err(AttractorError::Infeasible(format!("no p:2 resonance for p = {p}")));
        }
        Ok(Self { p, q: 2 })
    }

    pub fn omega0(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// Index of the resonant triaxial harmonic.
    pub fn k0(&self) -> i32 {
        2 * self.p / self.q
    }
}

impl fmt::Display for Resonance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p % 2 == 0 {
            write!(f, "{}:1", self.p / 2)
        } else {
            write!(f, "{}:2", self.p)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttractorError {
    Infeasible(String),
    NoConvergence { steps: usize, residual: f64 },
    Integration(IntegrationError),
}

impl fmt::Display for AttractorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Self::NoConvergence { steps, residual } => {
                write!(f, "Newton iteration stalled after {steps} steps (residual {residual:e})")
            }
            Self::Integration(e) => write!(f, "integration failed: {e}"),
        }
    }
}

impl std::error::Error for AttractorError {}

impl From<IntegrationError> for AttractorError {
    fn from(e: IntegrationError) -> Self {
        Self::Integration(e)
    }
}

/// Branch values `x`, `π/2 − x`, `x − π`, `π/2 − x − π` of a half-arcsine solution.
fn four_branches(first: f64) -> [f64; 4] {
    let second = FRAC_PI_2 - first;
    [first, second, first - PI, second - PI]
}

fn half_arcsin(ratio: f64, what: &str) -> Result<f64, AttractorError> {
    if ratio.abs() >= 1.0 || !ratio.is_finite() {
        return Err(AttractorError::Infeasible(format!("|{what}| = {} ≥ 1", ratio.abs())));
    }
    Ok(0.5 * ratio.asin())
}

/// Tidal forcing coefficient `λγ` in units of the triaxial strength.
fn tidal_ratio(params: &PhysicalParams) -> f64 {
    params.lambda * params.gamma
}

/// The four zeroth-order phases solving `A_{k0} sin 2θ = −γ F(n ω₀)`.
pub fn picard_zeroth(res: Resonance, params: &PhysicalParams) -> Result<[f64; 4], AttractorError> {
    let model = SpinModel::new(params);
    let ak0 = params.effective_coeff(res.k0());
    let forcing = tidal_ratio(params) * model.tidal_f(params.n * res.omega0());
    Ok(four_branches(half_arcsin(-forcing / ak0, "γF/A_k0")?))
}

/// Non-resonant harmonics of the first approximation: `(k, A_k / ((2ω₀ − k) n)²)`.
pub fn first_order_harmonics(res: Resonance, params: &PhysicalParams) -> Vec<(i32, f64)> {
    (K_MIN..=K_MAX)
        .filter(|&k| k != res.k0())
        .map(|k| (k, params.effective_coeff(k)))
        .filter(|&(_, a)| a != 0.0)
        .map(|(k, a)| {
            let freq = (2.0 * res.omega0() - k as f64) * params.n;
            (k, a / (freq * freq))
        })
        .collect()
}

/// First-order velocity correction `ξ̇₁(τ)`.
fn xi1_dot(res: Resonance, theta_bar0: f64, harmonics: &[(i32, f64)], params: &PhysicalParams, tau: f64) -> f64 {
    let eps = params.zeta;
    harmonics
        .iter()
        .map(|&(k, amp)| {
            let freq = (2.0 * res.omega0() - k as f64) * params.n;
            amp * freq * (2.0 * theta_bar0 + freq * tau).cos()
        })
        .sum::<f64>()
        * eps
}

/// Period average of `γ F(n ω₀ + ξ̇₁)`.
pub fn compute_j(res: Resonance, theta_bar0: f64, params: &PhysicalParams) -> f64 {
    let model = SpinModel::new(params);
    let harmonics = first_order_harmonics(res, params);
    let period = 2.0 * PI * res.q as f64 / params.n;
    let rule = GaussLegendre::new(8);
    let base = params.n * res.omega0();
    let ratio = tidal_ratio(params);
    let integral = adaptive_composite(&rule, 0.0, period, 256, 1e-9 * period, 30, |tau| {
        ratio * model.tidal_f(base + xi1_dot(res, theta_bar0, &harmonics, params, tau))
    });
    integral / period
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardApproximation {
    pub resonance: Resonance,
    pub theta_bar0: [f64; 4],
    pub theta_bar1: [f64; 4],
    pub harmonics: Vec<(i32, f64)>,
    /// `γ F(n ω₀)`.
    pub gamma_f: f64,
    pub j_value: f64,
}

impl PicardApproximation {
    /// Phase and velocity of the first approximation at `t = 0` on `branch` (0..4).
    pub fn seed(&self, branch: usize, params: &PhysicalParams) -> SpinState {
        let theta_bar0 = self.theta_bar0[branch];
        let eps = params.zeta;
        let mut theta = self.theta_bar1[branch];
        for &(_, amp) in &self.harmonics {
            theta += eps * amp * (2.0 * theta_bar0).sin();
        }
        let theta_dot = params.n * self.resonance.omega0()
            + xi1_dot(self.resonance, theta_bar0, &self.harmonics, params, 0.0);
        SpinState::new(theta, theta_dot, 0.0)
    }

    /// `θ₁(t)` on `branch`.
    pub fn waveform(&self, branch: usize, t: f64, params: &PhysicalParams) -> f64 {
        let theta_bar0 = self.theta_bar0[branch];
        let mut theta = self.theta_bar1[branch] + params.n * self.resonance.omega0() * t;
        for &(k, amp) in &self.harmonics {
            let freq = (2.0 * self.resonance.omega0() - k as f64) * params.n;
            theta += params.zeta * amp * (2.0 * theta_bar0 + freq * t).sin();
        }
        theta
    }
}

pub fn picard_first(res: Resonance, params: &PhysicalParams) -> Result<PicardApproximation, AttractorError> {
    let theta_bar0 = picard_zeroth(res, params)?;
    let model = SpinModel::new(params);
    let gamma_f = tidal_ratio(params) * model.tidal_f(params.n * res.omega0());
    let j_value = compute_j(res, theta_bar0[0], params);
    let ak0 = params.effective_coeff(res.k0());
    let theta_bar1 = four_branches(half_arcsin(-j_value / ak0, "J/A_k0")?);
    Ok(PicardApproximation {
        resonance: res,
        theta_bar0,
        theta_bar1,
        harmonics: first_order_harmonics(res, params),
        gamma_f,
        j_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

impl Multiplier {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Eigenvalues of a real 2×2 matrix, ordered by ascending real part (then imaginary).
pub fn eigenvalues(m: [[f64; 2]; 2]) -> [Multiplier; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * tr + r.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.5 * tr - r };
        let (lo, hi) = if small <= big { (small, big) } else { (big, small) };
        [Multiplier { re: lo, im: 0.0 }, Multiplier { re: hi, im: 0.0 }]
    } else {
        let im = (-disc).sqrt();
        [Multiplier { re: 0.5 * tr, im: -im }, Multiplier { re: 0.5 * tr, im }]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSolution {
    pub resonance: Resonance,
    /// Point on the section `t = 0`.
    pub section_point: SpinState,
    /// Return time of the section map (one forcing period; θ is identified modulo π).
    pub period: f64,
    pub monodromy: [[f64; 2]; 2],
    pub floquet: [Multiplier; 2],
    pub stable: bool,
    pub residual: f64,
    pub newton_steps: usize,
}

/// Config used for periodic-orbit work: tighter than the integration default.
pub fn refinement_config() -> IntegratorConfig {
    IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..IntegratorConfig::default() }
}

struct SectionMap<'a> {
    res: Resonance,
    cfg: &'a IntegratorConfig,
    params: &'a PhysicalParams,
}

impl SectionMap<'_> {
    /// Flow over one period; residual in `(θ, θ̇/n)` after removing the `pπ` advance.
    fn evaluate(&self, x: [f64; 2]) -> Result<([f64; 2], VariationalState), AttractorError> {
        let n = self.params.n;
        let s = SpinState::new(x[0], x[1] * n, 0.0);
        let v = integrate_variational(s, self.params.period(), self.cfg, self.params)?;
        let advance = self.res.omega0() * 2.0 * PI;
        let r = [v.state.theta - x[0] - advance, (v.state.theta_dot - s.theta_dot) / n];
        Ok((r, v))
    }
}

fn max_abs(r: [f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

pub fn refine_periodic(
    guess: SpinState,
    res: Resonance,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<PeriodicSolution, AttractorError> {
    const MAX_STEPS: usize = 25;
    const MAX_HALVINGS: u32 = 5;
    const TOL: f64 = 1e-10;
    let n = params.n;
    let map = SectionMap { res, cfg, params };
    let mut x = [guess.theta, guess.theta_dot / n];
    let (mut r, mut v) = map.evaluate(x)?;
    let mut steps = 0;
    while max_abs(r) >= TOL {
        if steps == MAX_STEPS {
            return Err(AttractorError::NoConvergence { steps, residual: max_abs(r) });
        }
        steps += 1;
        let m = v.tangent;
        // scaled Jacobian of the residual: diag(1, 1/n) · M · diag(1, n) − I
        let a = [[m[0][0] - 1.0, m[0][1] * n], [m[1][0] / n, m[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(AttractorError::NoConvergence { steps, residual: max_abs(r) });
        }
        let dx = [
            -(a[1][1] * r[0] - a[0][1] * r[1]) / det,
            -(-a[1][0] * r[0] + a[0][0] * r[1]) / det,
        ];
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = [x[0] + scale * dx[0], x[1] + scale * dx[1]];
            let (rt, vt) = map.evaluate(trial)?;
            if max_abs(rt) < max_abs(r) {
                accepted = Some((trial, rt, vt));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((xt, rt, vt)) => {
                x = xt;
                r = rt;
                v = vt;
            }
            None => return Err(AttractorError::NoConvergence { steps, residual: max_abs(r) }),
        }
    }
    let floquet = eigenvalues(v.tangent);
    let stable = floquet.iter().all(|l| l.modulus() < 1.0);
    Ok(PeriodicSolution {
        resonance: res,
        section_point: SpinState::new(x[0], x[1] * n, 0.0),
        period: params.period(),
        monodromy: v.tangent,
        floquet,
        stable,
        residual: max_abs(r),
        newton_steps: steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierKind {
    /// Complex-conjugate pair, reported as `|λ| − 1`.
    ComplexPair { modulus_minus_one: f64 },
    RealPair { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRecord {
    pub floquet: [Multiplier; 2],
    pub kind: MultiplierKind,
    pub stable: bool,
}

pub fn classify(sol: &PeriodicSolution) -> StabilityRecord {
    let [l1, l2] = sol.floquet;
    let kind = if l1.im != 0.0 {
        MultiplierKind::ComplexPair { modulus_minus_one: l1.modulus() - 1.0 }
    } else {
        MultiplierKind::RealPair { low: l1.re.min(l2.re), high: l1.re.max(l2.re) }
    };
    StabilityRecord {
        floquet: sol.floquet,
        kind,
        stable: l1.modulus().max(l2.modulus()) < 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusRow {
    pub branch: usize,
    pub picard: PicardApproximation,
    pub solution: Result<PeriodicSolution, AttractorError>,
}

/// Refine the first two Picard branches of one resonance.
pub fn census_resonance(
    res: Resonance,
    cfg: &IntegratorConfig,
    params: &PhysicalParams,
) -> Result<Vec<CensusRow>, AttractorError> {
    let picard = picard_first(res, params)?;
    Ok((0..2)
        .map(|branch| CensusRow {
            branch,
            solution: refine_periodic(picard.seed(branch, params), res, cfg, params),
            picard: picard.clone(),
        })
        .collect())
}

/// CSV `p,q,theta0,thetadot0_over_n,re_l1,im_l1,re_l2,im_l2,stable`; θ reported in `[0, π)`.
pub fn write_census_csv<W: std::io::Write>(mut out: W, rows: &[PeriodicSolution], params: &PhysicalParams) -> std::io::Result<()> {
    writeln!(out, "p,q,theta0,thetadot0_over_n,re_l1,im_l1,re_l2,im_l2,stable")?;
    for s in rows {
        let theta = s.section_point.theta.rem_euclid(PI);
        let [l1, l2] = s.floquet;
        writeln!(
            out,
            "{},{},{:.17},{:.17},{:.10e},{:.10e},{:.10e},{:.10e},{}",
            s.resonance.p,
            s.resonance.q,
            theta,
            s.section_point.theta_dot / params.n,
            l1.re,
            l1.im,
            l2.re,
            l2.im,
            s.stable
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonance_labels() {
        let labels: Vec<String> =
            TABLE_RESONANCES.iter().map(|&p| Resonance::new(p).unwrap().to_string()).collect();
        assert_eq!(labels, ["-1:1", "-1:2", "1:2", "1:1", "3:2", "2:1", "5:2", "3:1", "7:2", "4:1"]);
        assert!(Resonance::new(0).is_err());
        assert!(Resonance::new(12).is_err());
    }

    #[test]
    fn eigenvalues_of_known_matrices() {
        let e = eigenvalues([[2.0, 0.0], [0.0, 0.5]]);
        assert_eq!((e[0].re, e[1].re), (0.5, 2.0));
        let rot = eigenvalues([[0.0, -1.0], [1.0, 0.0]]);
        assert!((rot[1].im - 1.0).abs() < 1e-15 && rot[0].re.abs() < 1e-15);
    }

    #[test]
    fn zeroth_branches_satisfy_defining_identity() {
        let p = PhysicalParams::default();
        let model = SpinModel::new(&p);
        for &pn in &TABLE_RESONANCES {
            let res = Resonance::new(pn).unwrap();
            let th = picard_zeroth(res, &p).unwrap();
            let forcing = p.gamma * model.tidal_f(p.n * res.omega0());
            for t in th {
                let lhs = p.coeff(res.k0()) * (2.0 * t).sin() + forcing;
                assert!(lhs.abs() < 1e-15, "{res}: {lhs}");
            }
            assert!(th[0].abs() < PI / 4.0);
        }
    }
}
