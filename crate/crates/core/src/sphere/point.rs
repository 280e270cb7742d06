use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit vector in ℝ³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SpherePoint([f64; 3]);

impl TryFrom<[f64; 3]> for SpherePoint {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<SpherePoint> for [f64; 3] {
    fn from(p: SpherePoint) -> Self {
        p.0
    }
}

impl SpherePoint {
    /// Normalizes (x, y, z); fails on a zero or non-finite vector.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 1e-300) {
            return Err(Error::InvalidArgument(format!("cannot normalize ({x}, {y}, {z})")));
        }
        Ok(Self([x / n, y / n, z / n]))
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self([st * cp, st * sp, ct])
    }

    pub fn north() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn south() -> Self {
        Self([0.0, 0.0, -1.0])
    }

    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn antipode(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }

    /// Colatitude in [0, π].
    pub fn theta(&self) -> f64 {
        let r = (self.0[0] * self.0[0] + self.0[1] * self.0[1]).sqrt();
        r.atan2(self.0[2])
    }

    /// Longitude in [0, 2π).
    pub fn phi(&self) -> f64 {
        let p = self.0[1].atan2(self.0[0]);
        if p < 0.0 {
            p + 2.0 * std::f64::consts::PI
        } else {
            p
        }
    }

    /// 1 − x·y computed as |x − y|²/2 to keep precision near the diagonal.
    pub fn one_minus_dot(&self, other: &SpherePoint) -> f64 {
        let d = [self.0[0] - other.0[0], self.0[1] - other.0[1], self.0[2] - other.0[2]];
        0.5 * dot(&d, &d)
    }

    /// Orthonormal tangent basis (e₁, e₂) at this point with e₁ × e₂ = self.
    pub fn tangent_frame(&self) -> ([f64; 3], [f64; 3]) {
        let p = self.0;
        let a = if p[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let ap = dot(&a, &p);
        let mut e1 = [a[0] - ap * p[0], a[1] - ap * p[1], a[2] - ap * p[2]];
        let n = dot(&e1, &e1).sqrt();
        e1.iter_mut().for_each(|c| *c /= n);
        let e2 = cross(&p, &e1);
        (e1, e2)
    }

    /// Gnomonic chart: the point of the sphere above p + y₁e₁ + y₂e₂.
    pub fn gnomonic(&self, y1: f64, y2: f64) -> SpherePoint {
        let (e1, e2) = self.tangent_frame();
        self.gnomonic_in(&e1, &e2, y1, y2)
    }

    pub(crate) fn gnomonic_in(&self, e1: &[f64; 3], e2: &[f64; 3], y1: f64, y2: f64) -> SpherePoint {
        let p = self.0;
        let v = [
            p[0] + y1 * e1[0] + y2 * e2[0],
            p[1] + y1 * e1[1] + y2 * e2[1],
            p[2] + y1 * e1[2] + y2 * e2[2],
        ];
        let n = dot(&v, &v).sqrt();
        SpherePoint([v[0] / n, v[1] / n, v[2] / n])
    }

    /// Rotation taking the north pole to this point, applied to `q`.
    pub fn rotate_from_north(&self, q: &SpherePoint) -> SpherePoint {
        let (e1, e2) = self.tangent_frame();
        let p = self.0;
        let c = q.0;
        SpherePoint([
            c[0] * e1[0] + c[1] * e2[0] + c[2] * p[0],
            c[0] * e1[1] + c[1] * e2[1] + c[2] * p[1],
            c[0] * e1[2] + c[1] * e2[2] + c[2] * p[2],
        ])
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Geodesic distance in [0, π].
pub fn geodesic_distance(x: &SpherePoint, y: &SpherePoint) -> f64 {
    let c = cross(&x.0, &y.0);
    dot(&c, &c).sqrt().atan2(x.dot(y).clamp(-1.0, 1.0))
}

/// Stereographic projection from `pole`; the antipode of the pole goes to
/// the origin.
pub fn stereographic(x: &SpherePoint, pole: &SpherePoint) -> Result<[f64; 2]> {
    let denom = x.one_minus_dot(pole);
    if denom < 1e-14 {
        return Err(Error::Singular("stereographic projection at its pole".into()));
    }
    let (e1, e2) = pole.tangent_frame();
    Ok([dot(&x.0, &e1) / denom, dot(&x.0, &e2) / denom])
}

pub fn inverse_stereographic(y: [f64; 2], pole: &SpherePoint) -> SpherePoint {
    let (e1, e2) = pole.tangent_frame();
    let r2 = y[0] * y[0] + y[1] * y[1];
    let s = 1.0 / (1.0 + r2);
    let p = pole.0;
    let mut v = [0.0; 3];
    for k in 0..3 {
        v[k] = (2.0 * (y[0] * e1[k] + y[1] * e2[k]) + (r2 - 1.0) * p[k]) * s;
    }
    SpherePoint(v)
}

/// Area density of the round metric pulled back by the inverse projection.
pub fn stereographic_conformal_factor(y: [f64; 2]) -> f64 {
    let r2 = y[0] * y[0] + y[1] * y[1];
    4.0 / ((1.0 + r2) * (1.0 + r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pts() -> Vec<SpherePoint> {
        (0..25)
            .map(|i| {
                let t = 0.13 + 0.12 * i as f64;
                SpherePoint::from_angles(t, 2.3 * i as f64)
            })
            .collect()
    }

    #[test]
    fn antipode_projects_to_origin() {
        let p = SpherePoint::new(0.3, -0.4, 0.8).unwrap();
        let y = stereographic(&p.antipode(), &p).unwrap();
        assert!(y[0].abs() < 1e-15 && y[1].abs() < 1e-15);
        assert!(stereographic(&p, &p).is_err());
    }

    #[test]
    fn stereographic_round_trip() {
        let pole = SpherePoint::new(-0.2, 0.5, 0.1).unwrap();
        for x in pts() {
            if x.one_minus_dot(&pole) < 1e-3 {
                continue;
            }
            let back = inverse_stereographic(stereographic(&x, &pole).unwrap(), &pole);
            for k in 0..3 {
                assert!((back.0[k] - x.0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projected_area_is_four_pi() {
        // ∫ 4/(1+r²)² 2πr dr in log r with the trapezoid rule
        let (a, b, n) = (-30.0f64, 30.0f64, 6000);
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let r = (a + h * i as f64).exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * stereographic_conformal_factor([r, 0.0]) * 2.0 * PI * r * r;
        }
        assert!((s * h - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn geodesic_distance_identities() {
        let ps = pts();
        for x in &ps {
            assert_eq!(geodesic_distance(x, x), 0.0);
            assert!((geodesic_distance(x, &x.antipode()) - PI).abs() < 1e-12);
        }
        for w in ps.windows(2) {
            let (x, y) = (&w[0], &w[1]);
            let d = geodesic_distance(x, y);
            let chord: f64 = (0..3).map(|k| (x.0[k] - y.0[k]).powi(2)).sum();
            assert!((chord - 2.0 * (1.0 - d.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_are_orthonormal() {
        for p in pts().into_iter().chain([SpherePoint::north(), SpherePoint::south()]) {
            let (e1, e2) = p.tangent_frame();
            assert!(dot(&e1, &e2).abs() < 1e-14);
            assert!((dot(&e1, &e1) - 1.0).abs() < 1e-14);
            assert!(dot(&e1, &p.0).abs() < 1e-14);
            let c = cross(&e1, &e2);
            assert!((dot(&c, &p.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_zero_vector() {
        assert!(SpherePoint::new(0.0, 0.0, 0.0).is_err());
        let p = SpherePoint::new(0.0, 3.0, 4.0).unwrap();
        assert!((p.dot(&p) - 1.0).abs() < 1e-15);
    }
}
