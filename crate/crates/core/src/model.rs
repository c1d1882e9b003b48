//! Physical constants, torques and the acceleration field of the spin-orbit model.
//!
//! Units are years and radians throughout. The triaxial torque is a Fourier
//! series in `2θ - k n t`; the tidal torque is a sum of Andrade-rheology
//! kernels evaluated at the tidal frequencies `k n - 2θ̇`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

/// Lowest and highest Fourier index carried by the coefficient table.
pub const K_MIN: i32 = -2;
pub const K_MAX: i32 = 9;
const N_COEFF: usize = (K_MAX - K_MIN + 1) as usize;

/// Resonant index of the dominant triaxial term (the 3:2 resonance).
pub const K_PRINCIPAL: i32 = 3;

/// Fourier coefficients `A_k`, `k = -2..=8`, at Mercury's eccentricity.
/// `A_9` is not tabulated and defaults to zero.
const DEFAULT_COEFFS: [f64; N_COEFF] = [
    7.673e-5, 1.865e-4, 0.0, -1.023e-1, 8.958e-1, 6.542e-1, 3.260e-1, 1.380e-1, 5.325e-2,
    1.937e-2, 6.763e-3, 0.0,
];

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Mean motion, rad/yr.
    pub n: f64,
    /// Triaxiality strength, yr^-2.
    pub zeta: f64,
    /// Tidal strength, yr^-2.
    pub eta: f64,
    /// `eta / zeta` as quoted (kept separately, checked on validation).
    pub gamma: f64,
    coeffs: [f64; N_COEFF],
    pub alpha_rheo: f64,
    pub tau_m: f64,
    pub tau_a: f64,
    /// Self-gravitation constant.
    pub cal_a: f64,
    /// Multiplier on every triaxial term except `k = 3`.
    pub sideband: f64,
    /// Multiplier on the tidal torque.
    pub lambda: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            n: 26.0879,
            zeta: 0.09545,
            eta: 0.03096,
            gamma: 0.3243,
            coeffs: DEFAULT_COEFFS,
            alpha_rheo: 0.2,
            tau_m: 500.0,
            tau_a: 500.0,
            cal_a: 15.51726,
            sideband: 1.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    Invalid(String),
    UnknownKey(String),
    Parse { line: usize, text: String },
    Io(String),
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::Invalid(msg) => write!(f, "invalid parameters: {msg}"),
            ParamError::UnknownKey(k) => write!(f, "unknown parameter key `{k}`"),
            ParamError::Parse { line, text } => write!(f, "line {line}: cannot parse `{text}`"),
            ParamError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ParamError {}

impl PhysicalParams {
    /// Coefficient `A_k`; zero outside the tabulated range.
    pub fn coeff(&self, k: i32) -> f64 {
        if (K_MIN..=K_MAX).contains(&k) {
            self.coeffs[(k - K_MIN) as usize]
        } else {
            0.0
        }
    }

    pub fn set_coeff(&mut self, k: i32, value: f64) -> Result<(), ParamError> {
        if !(K_MIN..=K_MAX).contains(&k) {
            return Err(ParamError::Invalid(format!("coefficient index {k} out of range")));
        }
        self.coeffs[(k - K_MIN) as usize] = value;
        Ok(())
    }

    /// Triaxial indices with a nonzero coefficient, ascending.
    pub fn triaxial_indices(&self) -> Vec<i32> {
        (K_MIN..=K_MAX).filter(|&k| self.coeff(k) != 0.0).collect()
    }

    /// Stroboscopic period `2π/n`, yr.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.n
    }

    /// Triaxial amplitude of harmonic `k` after the sideband multiplier.
    pub fn effective_coeff(&self, k: i32) -> f64 {
        if k == K_PRINCIPAL {
            self.coeff(k)
        } else {
            self.sideband * self.coeff(k)
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            self.n, self.zeta, self.eta, self.gamma, self.alpha_rheo, self.tau_m, self.tau_a,
            self.cal_a, self.sideband, self.lambda,
        ];
        if finite.iter().chain(self.coeffs.iter()).any(|x| !x.is_finite()) {
            return Err(ParamError::Invalid("non-finite value".into()));
        }
        if self.n <= 0.0 {
            return Err(ParamError::Invalid("n must be positive".into()));
        }
        if self.tau_m <= 0.0 || self.tau_a <= 0.0 {
            return Err(ParamError::Invalid("rheology times must be positive".into()));
        }
        if !(self.alpha_rheo > 0.0 && self.alpha_rheo < 1.0) {
            return Err(ParamError::Invalid("alpha_rheo must lie in (0, 1)".into()));
        }
        if self.coeff(0) != 0.0 {
            return Err(ParamError::Invalid("A0 must vanish".into()));
        }
        if self.zeta > 0.0 && ((self.eta / self.zeta) / self.gamma - 1.0).abs() > 1e-3 {
            return Err(ParamError::Invalid(format!(
                "gamma = {} inconsistent with eta/zeta = {}",
                self.gamma,
                self.eta / self.zeta
            )));
        }
        Ok(())
    }

    /// Apply one `key = value` override. Coefficients use keys `A-2` .. `A9`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ParamError> {
        match key {
            "n" => self.n = value,
            "zeta" => self.zeta = value,
            "eta" => self.eta = value,
            "gamma" => self.gamma = value,
            "alpha_rheo" => self.alpha_rheo = value,
            "tau_M" => self.tau_m = value,
            "tau_A" => self.tau_a = value,
            "calA" => self.cal_a = value,
            "S" => self.sideband = value,
            "lambda" => self.lambda = value,
            _ => {
                let k = key
                    .strip_prefix('A')
                    .and_then(|s| s.parse::<i32>().ok())
                    .ok_or_else(|| ParamError::UnknownKey(key.to_string()))?;
                self.set_coeff(k, value)?;
            }
        }
        Ok(())
    }

    /// Parse `key = value` lines (`#` starts a comment) over the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, ParamError> {
        let mut params = Self::default();
        for (key, value) in parse_kv(text)? {
            let v: f64 = value.parse().map_err(|_| ParamError::Parse {
                line: 0,
                text: format!("{key} = {value}"),
            })?;
            params.set(&key, v)?;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn from_kv_file(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Io(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }

    /// All overridable entries, in config-file key form.
    pub fn to_kv(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("n".into(), self.n);
        out.insert("zeta".into(), self.zeta);
        out.insert("eta".into(), self.eta);
        out.insert("gamma".into(), self.gamma);
        out.insert("alpha_rheo".into(), self.alpha_rheo);
        out.insert("tau_M".into(), self.tau_m);
        out.insert("tau_A".into(), self.tau_a);
        out.insert("calA".into(), self.cal_a);
        out.insert("S".into(), self.sideband);
        out.insert("lambda".into(), self.lambda);
        for k in K_MIN..=K_MAX {
            out.insert(format!("A{k}"), self.coeff(k));
        }
        out
    }
}

/// Split `key = value` lines, dropping blanks and `#` comments. Keys keep order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ParamError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ParamError::Parse {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    /// Unwrapped sidereal angle, rad.
    pub theta: f64,
    /// Spin rate, rad/yr.
    pub theta_dot: f64,
    /// Time, yr.
    pub t: f64,
}

impl SpinState {
    pub fn new(theta: f64, theta_dot: f64, t: f64) -> Self {
        Self { theta, theta_dot, t }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.theta_dot.is_finite() && self.t.is_finite()
    }
}

/// Parameters with the rheology and Fourier constants precomputed for hot loops.
#[derive(Debug, Clone)]
pub struct SpinModel {
    params: PhysicalParams,
    one_minus_alpha: f64,
    andrade_sin: f64,
    andrade_cos: f64,
    inv_tau_m: f64,
    /// `(k, A_k^2)` for the tidal sum `k = 1..=9`, zero terms dropped.
    tidal_terms: Vec<(f64, f64)>,
    /// Triaxial amplitudes for `k = K_MIN..=K_MAX` with the sideband applied.
    triaxial: [f64; N_COEFF],
}

impl SpinModel {
    pub fn new(params: &PhysicalParams) -> Self {
        let alpha = params.alpha_rheo;
        let scale = params.tau_a.powf(-alpha) * libm::tgamma(alpha + 1.0);
        let tidal_terms = (1..=9)
            .map(|k| (k as f64, params.coeff(k).powi(2)))
            .filter(|&(_, a2)| a2 != 0.0)
            .collect();
        let mut triaxial = [0.0; N_COEFF];
        for k in K_MIN..=K_MAX {
            triaxial[(k - K_MIN) as usize] = params.effective_coeff(k);
        }
        Self {
            params: params.clone(),
            one_minus_alpha: 1.0 - alpha,
            andrade_sin: scale * (alpha * PI / 2.0).sin(),
            andrade_cos: scale * (alpha * PI / 2.0).cos(),
            inv_tau_m: 1.0 / params.tau_m,
            tidal_terms,
            triaxial,
        }
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    /// Rheology kernel Ξ(ω); odd, with Ξ(0) = 0.
    pub fn xi(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        let w = omega.abs();
        let wp = w.powf(self.one_minus_alpha);
        let im = -self.inv_tau_m - wp * self.andrade_sin;
        let re = w + wp * self.andrade_cos + self.params.cal_a * w;
        let val = im * w / (re * re + im * im);
        if omega > 0.0 {
            val
        } else {
            -val
        }
    }

    /// dΞ/dω, even in ω. The limit at ω = 0 is -τ_M from both sides.
    pub fn xi_prime(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w == 0.0 {
            return -self.params.tau_m;
        }
        let p = self.one_minus_alpha;
        let wp = w.powf(p);
        let dwp = p * wp / w;
        let im = -self.inv_tau_m - wp * self.andrade_sin;
        let dim = -dwp * self.andrade_sin;
        let re = w + wp * self.andrade_cos + self.params.cal_a * w;
        let dre = 1.0 + dwp * self.andrade_cos + self.params.cal_a;
        let num = im * w;
        let dnum = dim * w + im;
        let den = re * re + im * im;
        let dden = 2.0 * (re * dre + im * dim);
        (dnum * den - num * dden) / (den * den)
    }

    /// Tidal function F(θ̇) = Σ_{k=1..9} A_k² Ξ(k n − 2θ̇).
    pub fn tidal_f(&self, theta_dot: f64) -> f64 {
        let n = self.params.n;
        self.tidal_terms
            .iter()
            .map(|&(k, a2)| a2 * self.xi(k * n - 2.0 * theta_dot))
            .sum()
    }

    /// dF/dθ̇.
    pub fn tidal_f_prime(&self, theta_dot: f64) -> f64 {
        let n = self.params.n;
        -2.0 * self
            .tidal_terms
            .iter()
            .map(|&(k, a2)| a2 * self.xi_prime(k * n - 2.0 * theta_dot))
            .sum::<f64>()
    }

    /// (G, ∂G/∂θ) for G = Σ_k c_k sin(2θ − k n t), with c_k the sideband-scaled amplitudes.
    pub fn triaxial_with_slope(&self, theta: f64, t: f64) -> (f64, f64) {
        let (s2, c2) = (2.0 * theta).sin_cos();
        let (s1, c1) = (self.params.n * t).sin_cos();
        // sin(2θ - k nt) = s2 cos(k nt) - c2 sin(k nt), with cos/sin(k nt) by recurrence
        let mut g = 0.0;
        let mut dg = 0.0;
        let mut accumulate = |k: i32, ck: f64, sk: f64| {
            let amp = self.triaxial[(k - K_MIN) as usize];
            if amp != 0.0 {
                g += amp * (s2 * ck - c2 * sk);
                dg += 2.0 * amp * (c2 * ck + s2 * sk);
            }
        };
        accumulate(0, 1.0, 0.0);
        let (mut cp, mut sp) = (1.0, 0.0);
        let (mut cn, mut sn) = (1.0, 0.0);
        for k in 1..=K_MAX.max(-K_MIN) {
            let (c_next, s_next) = (cp * c1 - sp * s1, sp * c1 + cp * s1);
            cp = c_next;
            sp = s_next;
            let (cm, sm) = (cn * c1 + sn * s1, sn * c1 - cn * s1);
            cn = cm;
            sn = sm;
            if k <= K_MAX {
                accumulate(k, cp, sp);
            }
            if -k >= K_MIN {
                accumulate(-k, cn, sn);
            }
        }
        (g, dg)
    }

    pub fn triaxial_g(&self, theta: f64, t: f64) -> f64 {
        self.triaxial_with_slope(theta, t).0
    }

    /// θ̈ at `(θ, θ̇, t)`.
    pub fn acceleration(&self, theta: f64, theta_dot: f64, t: f64) -> f64 {
        let p = &self.params;
        let g = self.triaxial_g(theta, t);
        let tide = if p.lambda != 0.0 && p.eta != 0.0 {
            p.lambda * p.eta * self.tidal_f(theta_dot)
        } else {
            0.0
        };
        -p.zeta * g - tide
    }

    /// θ̈ together with its partial derivatives in θ and θ̇.
    pub fn acceleration_jacobian(&self, theta: f64, theta_dot: f64, t: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let (g, dg) = self.triaxial_with_slope(theta, t);
        let (tide, dtide) = if p.lambda != 0.0 && p.eta != 0.0 {
            let s = p.lambda * p.eta;
            (s * self.tidal_f(theta_dot), s * self.tidal_f_prime(theta_dot))
        } else {
            (0.0, 0.0)
        };
        (-p.zeta * g - tide, -p.zeta * dg, -dtide)
    }
}

pub fn xi_kernel(omega: f64, params: &PhysicalParams) -> f64 {
    SpinModel::new(params).xi(omega)
}

pub fn tidal_f(theta_dot: f64, params: &PhysicalParams) -> f64 {
    SpinModel::new(params).tidal_f(theta_dot)
}

pub fn tidal_f_prime(theta_dot: f64, params: &PhysicalParams) -> f64 {
    SpinModel::new(params).tidal_f_prime(theta_dot)
}

pub fn triaxial_g(theta: f64, t: f64, params: &PhysicalParams) -> f64 {
    SpinModel::new(params).triaxial_g(theta, t)
}

pub fn acceleration(state: &SpinState, params: &PhysicalParams) -> f64 {
    SpinModel::new(params).acceleration(state.theta, state.theta_dot, state.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_table_shape() {
        let p = PhysicalParams::default();
        assert_eq!(p.coeff(0), 0.0);
        assert!(p.coeff(1) < 0.0);
        for k in 2..=8 {
            assert!(p.coeff(k) > 0.0);
        }
        assert_eq!(p.coeff(9), 0.0);
        assert_eq!(p.coeff(42), 0.0);
        p.validate().unwrap();
    }

    #[test]
    fn triaxial_recurrence_matches_direct_sum() {
        let mut p = PhysicalParams::default();
        p.sideband = 0.37;
        let m = SpinModel::new(&p);
        for &(theta, t) in &[(0.1, 0.0), (1.3, 0.77), (-4.0, 123.4)] {
            let direct: f64 = (K_MIN..=K_MAX)
                .map(|k| p.effective_coeff(k) * (2.0 * theta - k as f64 * p.n * t).sin())
                .sum();
            assert!((m.triaxial_g(theta, t) - direct).abs() < 1e-12);
            let h = 1e-6;
            let fd = (m.triaxial_g(theta + h, t) - m.triaxial_g(theta - h, t)) / (2.0 * h);
            assert!((m.triaxial_with_slope(theta, t).1 - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn xi_prime_matches_finite_difference() {
        let m = SpinModel::new(&PhysicalParams::default());
        for &w in &[1e-3_f64, 0.05, 1.0, 13.04, -7.0, 200.0] {
            let h = 1e-7 * w.abs().max(1e-3);
            let fd = (m.xi(w + h) - m.xi(w - h)) / (2.0 * h);
            assert!((m.xi_prime(w) - fd).abs() <= 1e-6 * fd.abs().max(1e-6), "{w}");
        }
    }

    #[test]
    fn kv_round_trip() {
        let text = "# override\nS = 0.5\nlambda=2\nA9 = 1e-3\n";
        let p = PhysicalParams::from_kv_str(text).unwrap();
        assert_eq!(p.sideband, 0.5);
        assert_eq!(p.lambda, 2.0);
        assert_eq!(p.coeff(9), 1e-3);
        assert!(matches!(
            PhysicalParams::from_kv_str("bogus = 1"),
            Err(ParamError::UnknownKey(_))
        ));
    }
}
