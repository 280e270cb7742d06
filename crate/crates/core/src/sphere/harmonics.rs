//! Orthonormal real spherical harmonics.
//!
//! Y_{l,0} = P̄_l^0(cos θ), Y_{l,m} = √2 P̄_l^m(cos θ) cos mφ and
//! Y_{l,−m} = √2 P̄_l^m(cos θ) sin mφ for m > 0, where P̄ includes the
//! normalization and no Condon–Shortley phase.

use std::f64::consts::{PI, SQRT_2};

use super::point::SpherePoint;

/// Packed index of (l, m ≥ 0) in a triangular Legendre table.
#[inline]
pub(crate) fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Index of (l, m), |m| ≤ l, in a coefficient vector of length (L+1)².
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Normalized associated Legendre values P̄_l^m(μ) for 0 ≤ m ≤ l ≤ l_max,
/// packed with [`tri_index`].
pub fn normalized_legendre(l_max: usize, mu: f64) -> Vec<f64> {
    let sin = (1.0 - mu * mu).max(0.0).sqrt();
    let mut p = vec![0.0; tri_index(l_max, l_max) + 1];
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin;
        }
        p[tri_index(m, m)] = pmm;
        if m == l_max {
            break;
        }
        let mut prev2 = pmm;
        let mut prev1 = (2.0 * m as f64 + 3.0).sqrt() * mu * pmm;
        p[tri_index(m + 1, m)] = prev1;
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let cur = a * (mu * prev1 - b * prev2);
            p[tri_index(l, m)] = cur;
            prev2 = prev1;
            prev1 = cur;
        }
    }
    p
}

/// All real harmonics Y_{l,m}(x), l ≤ l_max, indexed by [`lm_index`].
pub fn real_harmonics_at(l_max: usize, x: &SpherePoint) -> Vec<f64> {
    let p = normalized_legendre(l_max, x.z());
    let phi = x.y().atan2(x.x());
    let mut out = vec![0.0; (l_max + 1) * (l_max + 1)];
    for m in 0..=l_max {
        let (s, c) = (m as f64 * phi).sin_cos();
        for l in m..=l_max {
            let v = p[tri_index(l, m)];
            if m == 0 {
                out[lm_index(l, 0)] = v;
            } else {
                out[lm_index(l, m as i64)] = SQRT_2 * v * c;
                out[lm_index(l, -(m as i64))] = SQRT_2 * v * s;
            }
        }
    }
    out
}

/// Single real harmonic Y_{l,m}(x).
pub fn real_ylm(l: usize, m: i64, x: &SpherePoint) -> f64 {
    assert!(m.unsigned_abs() as usize <= l, "|m| must not exceed l");
    let p = normalized_legendre(l, x.z());
    let ma = m.unsigned_abs() as usize;
    let v = p[tri_index(l, ma)];
    let phi = x.y().atan2(x.x());
    match m.signum() {
        0 => v,
        1 => SQRT_2 * v * (ma as f64 * phi).cos(),
        _ => SQRT_2 * v * (ma as f64 * phi).sin(),
    }
}
