//! Explicit Runge-Kutta 8(5,3) stepper with PI step control and dense output.

use super::tableau::*;
use super::IntegrationError;

/// A first-order system `y' = f(t, y)` of fixed dimension.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];

    /// Reference magnitude of each component for relative error control.
    fn magnitude(&self, y: &[f64; N]) -> [f64; N] {
        y.map(|v| v.abs().max(1.0))
    }

    /// Upper bound on the next step imposed by the system (e.g. near kinks).
    fn step_cap(&self, _t: f64, _y: &[f64; N]) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub safety: f64,
    /// Proportional gain exponent of the PI controller.
    pub beta: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            min_step: 1e-14,
            safety: 0.9,
            beta: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
}

type Vector<const N: usize> = [f64; N];

#[inline]
fn axpy<const N: usize>(y: &Vector<N>, h: f64, terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    let mut out = *y;
    for &(c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

#[inline]
fn combo<const N: usize>(terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    let mut out = [0.0; N];
    for &(c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

pub struct Dop853<'s, S, const N: usize> {
    sys: &'s S,
    ctl: StepControl,
    t: f64,
    y: Vector<N>,
    f: Vector<N>,
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    // previous step, kept for dense output
    t_old: f64,
    h_old: f64,
    y_old: Vector<N>,
    stages: [Vector<N>; 8],
    dense: Option<[Vector<N>; 8]>,
    stats: StepStats,
}

impl<'s, S: OdeSystem<N>, const N: usize> Dop853<'s, S, N> {
    pub fn new(sys: &'s S, t0: f64, y0: Vector<N>, ctl: StepControl) -> Self {
        let f = sys.rhs(t0, &y0);
        let mut s = Self {
            sys,
            ctl,
            t: t0,
            y: y0,
            f,
            h: 0.0,
            fac_old: 1e-4,
            last_rejected: false,
            t_old: t0,
            h_old: 0.0,
            y_old: y0,
            stages: [[0.0; N]; 8],
            dense: None,
            stats: StepStats { evaluations: 1, ..Default::default() },
        };
        s.h = s.initial_step();
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &Vector<N> {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Start of the last accepted step.
    pub fn t_prev(&self) -> f64 {
        self.t_old
    }

    fn weights(&self, a: &Vector<N>, b: &Vector<N>) -> Vector<N> {
        let ma = self.sys.magnitude(a);
        let mb = self.sys.magnitude(b);
        let mut w = [0.0; N];
        for i in 0..N {
            w[i] = self.ctl.abs_tol + self.ctl.rel_tol * ma[i].max(mb[i]);
        }
        w
    }

    fn initial_step(&mut self) -> f64 {
        let w = self.weights(&self.y, &self.y);
        let norm = |v: &Vector<N>| {
            (v.iter().zip(w.iter()).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt()
        };
        let d0 = norm(&self.y);
        let d1 = norm(&self.f);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.ctl.max_step).min(self.sys.step_cap(self.t, &self.y));
        let y1 = axpy(&self.y, h0, &[(1.0, &self.f)]);
        let f1 = self.sys.rhs(self.t + h0, &y1);
        self.stats.evaluations += 1;
        let diff: Vector<N> = std::array::from_fn(|i| f1[i] - self.f[i]);
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.ctl.max_step)
    }

    /// Take one accepted step, never passing `t_stop`. Returns the new time.
    pub fn step(&mut self, t_stop: f64) -> Result<f64, IntegrationError> {
        let expo = 1.0 / 8.0 - 0.2 * self.ctl.beta;
        loop {
            let cap = self.sys.step_cap(self.t, &self.y).min(self.ctl.max_step);
            let mut h = self.h.min(cap);
            let remaining = t_stop - self.t;
            let mut hits_stop = false;
            if h >= remaining {
                h = remaining;
                hits_stop = true;
            }
            if h < self.ctl.min_step && !hits_stop {
                return Err(IntegrationError::StepUnderflow { t: self.t, h });
            }
            if h <= 0.0 {
                return Ok(self.t);
            }
            let (y_new, err) = self.attempt(h);
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if h <= self.ctl.min_step {
                    return Err(IntegrationError::NonFinite { t: self.t });
                }
                self.h = h * 0.25;
                self.stats.rejected += 1;
                continue;
            }
            let fac11 = err.powf(expo);
            let fac = fac11 / self.fac_old.powf(self.ctl.beta);
            let fac = (fac / self.ctl.safety).clamp(1.0 / 6.0, 1.0 / 0.333);
            let mut h_new = h / fac;
            if err <= 1.0 {
                self.fac_old = err.max(1e-4);
                self.stats.accepted += 1;
                let f_new = self.sys.rhs(self.t + h, &y_new);
                self.stats.evaluations += 1;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.last_rejected = false;
                self.t_old = self.t;
                self.h_old = h;
                self.y_old = self.y;
                self.y = y_new;
                self.f = f_new;
                self.t = if hits_stop { t_stop } else { self.t + h };
                self.dense = None;
                // keep the controller's proposal even when the step was shortened to land on t_stop
                self.h = if hits_stop { h_new.max(self.h) } else { h_new };
                return Ok(self.t);
            }
            self.last_rejected = true;
            self.stats.rejected += 1;
            self.h = h / (1.0 / 0.333f64).min(fac11 / self.ctl.safety);
        }
    }

    fn attempt(&mut self, h: f64) -> (Vector<N>, f64) {
        let (t, y) = (self.t, &self.y);
        let k1 = self.f;
        let sys = self.sys;
        let k2 = sys.rhs(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A43, &k3)]));
        let k5 = sys.rhs(t + C5 * h, &axpy(y, h, &[(A51, &k1), (A53, &k3), (A54, &k4)]));
        let k6 = sys.rhs(t + C6 * h, &axpy(y, h, &[(A61, &k1), (A64, &k4), (A65, &k5)]));
        let k7 = sys.rhs(
            t + C7 * h,
            &axpy(y, h, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]),
        );
        let k8 = sys.rhs(
            t + C8 * h,
            &axpy(y, h, &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)]),
        );
        let k9 = sys.rhs(
            t + C9 * h,
            &axpy(
                y,
                h,
                &[(A91, &k1), (A94, &k4), (A95, &k5), (A96, &k6), (A97, &k7), (A98, &k8)],
            ),
        );
        let k10 = sys.rhs(
            t + C10 * h,
            &axpy(
                y,
                h,
                &[
                    (A101, &k1),
                    (A104, &k4),
                    (A105, &k5),
                    (A106, &k6),
                    (A107, &k7),
                    (A108, &k8),
                    (A109, &k9),
                ],
            ),
        );
        let k11 = sys.rhs(
            t + C11 * h,
            &axpy(
                y,
                h,
                &[
                    (A111, &k1),
                    (A114, &k4),
                    (A115, &k5),
                    (A116, &k6),
                    (A117, &k7),
                    (A118, &k8),
                    (A119, &k9),
                    (A1110, &k10),
                ],
            ),
        );
        let y12 = axpy(
            y,
            h,
            &[
                (A121, &k1),
                (A124, &k4),
                (A125, &k5),
                (A126, &k6),
                (A127, &k7),
                (A128, &k8),
                (A129, &k9),
                (A1210, &k10),
                (A1211, &k11),
            ],
        );
        let k12 = sys.rhs(t + h, &y12);
        let incr = combo(&[
            (B1, &k1),
            (B6, &k6),
            (B7, &k7),
            (B8, &k8),
            (B9, &k9),
            (B10, &k10),
            (B11, &k11),
            (B12, &k12),
        ]);
        let y_new = axpy(y, h, &[(1.0, &incr)]);
        let w = self.weights(y, &y_new);
        let (mut err5, mut err3) = (0.0, 0.0);
        for i in 0..N {
            let e3 = incr[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            let e5 = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err3 += (e3 / w[i]).powi(2);
            err5 += (e5 / w[i]).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h * err5 * (1.0 / (deno * N as f64)).sqrt();
        self.stats.evaluations += 11;
        self.stages = [k1, k6, k7, k8, k9, k10, k11, k12];
        (y_new, err)
    }

    fn prepare_dense(&mut self) -> [Vector<N>; 8] {
        if let Some(d) = self.dense {
            return d;
        }
        let h = self.h_old;
        let t = self.t_old;
        let y0 = self.y_old;
        let y1 = self.y;
        let [k1, k6, k7, k8, k9, k10, k11, k12] = self.stages;
        let f1 = self.f;
        let sys = self.sys;
        let ydiff: Vector<N> = std::array::from_fn(|i| y1[i] - y0[i]);
        let bspl: Vector<N> = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
        let c4: Vector<N> = std::array::from_fn(|i| ydiff[i] - h * f1[i] - bspl[i]);
        let row = |d: [f64; 8]| {
            combo(&[
                (d[0], &k1),
                (d[1], &k6),
                (d[2], &k7),
                (d[3], &k8),
                (d[4], &k9),
                (d[5], &k10),
                (d[6], &k11),
                (d[7], &k12),
            ])
        };
        let d4 = row([D41, D46, D47, D48, D49, D410, D411, D412]);
        let d5 = row([D51, D56, D57, D58, D59, D510, D511, D512]);
        let d6 = row([D61, D66, D67, D68, D69, D610, D611, D612]);
        let d7 = row([D71, D76, D77, D78, D79, D710, D711, D712]);
        let k14 = sys.rhs(
            t + C14 * h,
            &axpy(
                &y0,
                h,
                &[
                    (A141, &k1),
                    (A147, &k7),
                    (A148, &k8),
                    (A149, &k9),
                    (A1410, &k10),
                    (A1411, &k11),
                    (A1412, &k12),
                    (A1413, &f1),
                ],
            ),
        );
        let k15 = sys.rhs(
            t + C15 * h,
            &axpy(
                &y0,
                h,
                &[
                    (A151, &k1),
                    (A156, &k6),
                    (A157, &k7),
                    (A158, &k8),
                    (A1511, &k11),
                    (A1512, &k12),
                    (A1513, &f1),
                    (A1514, &k14),
                ],
            ),
        );
        let k16 = sys.rhs(
            t + C16 * h,
            &axpy(
                &y0,
                h,
                &[
                    (A161, &k1),
                    (A166, &k6),
                    (A167, &k7),
                    (A168, &k8),
                    (A169, &k9),
                    (A1613, &f1),
                    (A1614, &k14),
                    (A1615, &k15),
                ],
            ),
        );
        self.stats.evaluations += 3;
        let finish = |d: Vector<N>, e: [f64; 4]| -> Vector<N> {
            std::array::from_fn(|i| {
                h * (d[i] + e[0] * f1[i] + e[1] * k14[i] + e[2] * k15[i] + e[3] * k16[i])
            })
        };
        let out = [
            y0,
            ydiff,
            bspl,
            c4,
            finish(d4, [D413, D414, D415, D416]),
            finish(d5, [D513, D514, D515, D516]),
            finish(d6, [D613, D614, D615, D616]),
            finish(d7, [D713, D714, D715, D716]),
        ];
        self.dense = Some(out);
        out
    }

    /// Interpolated state at `t` within the last accepted step.
    pub fn dense_output(&mut self, t: f64) -> Vector<N> {
        if t == self.t {
            return self.y;
        }
        let c = self.prepare_dense();
        let s = (t - self.t_old) / self.h_old;
        let s1 = 1.0 - s;
        std::array::from_fn(|i| {
            let conpar = c[4][i] + (c[5][i] + (c[6][i] + c[7][i] * s) * s1) * s;
            c[0][i] + (c[1][i] + (c[2][i] + (c[3][i] + conpar * s1) * s) * s1) * s
        })
    }

    /// Advance until `t` is covered (never past `t_stop`) and return the state at `t`.
    pub fn advance_to(&mut self, t: f64, t_stop: f64) -> Result<Vector<N>, IntegrationError> {
        while self.t < t {
            self.step(t_stop)?;
        }
        if t < self.t_old {
            return Err(IntegrationError::NonMonotonic { t });
        }
        Ok(self.dense_output(t))
    }
}
