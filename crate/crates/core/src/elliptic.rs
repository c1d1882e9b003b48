//! Complete and incomplete elliptic integrals of the first kind and the Jacobi
//! amplitude, parameter convention `m = k²`, `0 ≤ m < 1`.

use std::f64::consts::{FRAC_PI_2, PI};

/// `K(m)` by the arithmetic-geometric mean.
pub fn complete_k(m: f64) -> f64 {
    let (mut a, mut b) = (1.0, (1.0 - m).sqrt());
    while (a - b).abs() > 1e-15 * a {
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    FRAC_PI_2 / a
}

/// Carlson's symmetric integral `R_F(x, y, z)` by duplication.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    let (mut x, mut y, mut z) = (x, y, z);
    loop {
        let mean = (x + y + z) / 3.0;
        let dx = 1.0 - x / mean;
        let dy = 1.0 - y / mean;
        let dz = 1.0 - z / mean;
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0)
                / mean.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
    }
}

/// `F(φ | m)` for any real `φ`, continued by `F(φ + π) = F(φ) + 2K`.
pub fn incomplete_f(phi: f64, m: f64) -> f64 {
    let turns = (phi / PI).round();
    let r = phi - turns * PI;
    let (s, c) = r.sin_cos();
    let core = s * carlson_rf(c * c, 1.0 - m * s * s, 1.0);
    core + 2.0 * turns * complete_k(m)
}

/// Jacobi amplitude `am(u | m)`, the inverse of [`incomplete_f`].
pub fn jacobi_am(u: f64, m: f64) -> f64 {
    if m == 0.0 {
        return u;
    }
    let k = complete_k(m);
    let turns = (u / (2.0 * k)).round();
    let r = u - turns * 2.0 * k;
    am_descending(r, m) + turns * PI
}

/// Descending Landen / AGM scheme, accurate for `|u| ≤ K`.
fn am_descending(u: f64, m: f64) -> f64 {
    let mut a = vec![1.0];
    let mut c = vec![m.sqrt()];
    let mut b = (1.0 - m).sqrt();
    while c.last().unwrap().abs() > 1e-16 && a.len() < 40 {
        let ai = *a.last().unwrap();
        c.push(0.5 * (ai - b));
        a.push(0.5 * (ai + b));
        b = (ai * b).sqrt();
    }
    let levels = a.len() - 1;
    let mut phi = (1u64 << levels) as f64 * a[levels] * u;
    for i in (1..=levels).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_integral_reference_values() {
        assert!((complete_k(0.0) - FRAC_PI_2).abs() < 1e-15);
        // K(1/2) = Γ(1/4)² / (4√π)
        assert!((complete_k(0.5) - 1.854_074_677_301_372).abs() < 1e-14);
    }

    #[test]
    fn amplitude_inverts_the_integral() {
        for &m in &[0.0, 0.3, 0.9, 0.999] {
            for &phi in &[-4.0, -0.7, 0.0, 0.4, 1.5, 3.0, 7.5] {
                let u = incomplete_f(phi, m);
                assert!((jacobi_am(u, m) - phi).abs() < 1e-11, "m={m} phi={phi}");
            }
        }
    }

    #[test]
    fn quarter_period_maps_to_right_angle() {
        let m = 0.7;
        assert!((incomplete_f(FRAC_PI_2, m) - complete_k(m)).abs() < 1e-14);
    }
}
