//! Gauss-Legendre rules and composite/adaptive quadrature on periodic integrands.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    /// Nodes on [-1, 1].
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// ∫_a^b f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule over `panels` equal panels; each panel is split recursively
/// while its one- and two-panel estimates differ by more than `tol` times the
/// panel's share of the interval.
pub fn adaptive_composite<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_depth: u32,
    mut f: F,
) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == panels { b } else { lo + width };
        let coarse = rule.integrate(lo, hi, &mut f);
        total += refine(rule, lo, hi, coarse, tol / panels as f64, max_depth, &mut f);
    }
    total
}

fn refine<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    lo: f64,
    hi: f64,
    coarse: f64,
    tol: f64,
    depth: u32,
    f: &mut F,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let left = rule.integrate(lo, mid, &mut *f);
    let right = rule.integrate(mid, hi, &mut *f);
    let fine = left + right;
    if depth == 0 || (fine - coarse).abs() <= tol {
        return fine;
    }
    refine(rule, lo, mid, left, 0.5 * tol, depth - 1, f)
        + refine(rule, mid, hi, right, 0.5 * tol, depth - 1, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        let wsum: f64 = gl.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_a_kink() {
        let gl = GaussLegendre::new(8);
        let v = adaptive_composite(&gl, 0.0, 1.0, 4, 1e-13, 40, |x| (x - 0.3).abs());
        assert!((v - (0.09 / 2.0 + 0.49 / 2.0)).abs() < 1e-12);
    }
}
