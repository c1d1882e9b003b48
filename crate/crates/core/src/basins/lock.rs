//! Stroboscopic lock detection.

use crate::model::SpinState;
use std::f64::consts::PI;

/// A completed lock: numerator `p` of the `p:2` ratio and the window start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lock {
    pub numerator: i32,
    pub start: f64,
}

/// Movement back from the running extreme that counts as a turn, rad.
const TURN_HYSTERESIS: f64 = 1e-3;
/// Arc below which the resonant angle counts as stationary, rad.
const STILL_ARC: f64 = 1e-2;

/// Watches strobes `θ̇(kT₀)` for `window` consecutive periods inside
/// `|θ̇/n − p/2| < δ` with the resonant angle `θ − p n t / 2` confined to an
/// arc shorter than `π`.
///
/// The arc condition rejects circulation, but a passage through the
/// separatrix reverses the angle once and can keep it inside such an arc for
/// longer than the window. A lock therefore also needs two turning points of
/// the angle (one full libration), or an angle that is stationary outright.
#[derive(Debug, Clone)]
pub struct LockMonitor {
    delta: f64,
    window: u32,
    n: f64,
    numerator: Option<i32>,
    count: u32,
    start: f64,
    low: f64,
    high: f64,
    pivot: f64,
    heading: f64,
    turns: u32,
}

impl LockMonitor {
    pub fn new(delta: f64, window: u32, n: f64) -> Self {
        Self {
            delta,
            window,
            n,
            numerator: None,
            count: 0,
            start: 0.0,
            low: 0.0,
            high: 0.0,
            pivot: 0.0,
            heading: 0.0,
            turns: 0,
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.numerator.is_some()
    }

    fn restart(&mut self, numerator: i32, s: &SpinState, angle: f64) {
        self.numerator = Some(numerator);
        self.count = 1;
        self.start = s.t;
        self.low = angle;
        self.high = angle;
        self.pivot = angle;
        self.heading = 0.0;
        self.turns = 0;
    }

    fn track_turns(&mut self, angle: f64) {
        let step = angle - self.pivot;
        if self.heading == 0.0 {
            if step.abs() > TURN_HYSTERESIS {
                self.heading = step.signum();
                self.pivot = angle;
            }
        } else if step * self.heading > 0.0 {
            self.pivot = angle;
        } else if step.abs() > TURN_HYSTERESIS {
            self.turns += 1;
            self.heading = -self.heading;
            self.pivot = angle;
        }
    }

    /// Feed the next strobe; returns the lock once the window is complete.
    pub fn observe(&mut self, s: &SpinState) -> Option<Lock> {
        let ratio = s.theta_dot / self.n;
        let numerator = (2.0 * ratio).round() as i32;
        if (ratio - 0.5 * numerator as f64).abs() >= self.delta {
            self.numerator = None;
            return None;
        }
        let angle = s.theta - 0.5 * numerator as f64 * self.n * s.t;
        if self.numerator != Some(numerator) {
            self.restart(numerator, s, angle);
        } else {
            self.low = self.low.min(angle);
            self.high = self.high.max(angle);
            if self.high - self.low >= PI {
                self.restart(numerator, s, angle);
            } else {
                self.count += 1;
                self.track_turns(angle);
            }
        }
        let librating = self.turns >= 2 || self.high - self.low < STILL_ARC;
        (self.count > self.window && librating).then_some(Lock { numerator, start: self.start })
    }
}
