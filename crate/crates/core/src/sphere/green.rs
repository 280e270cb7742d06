use std::f64::consts::{LN_2, PI};

use super::point::SpherePoint;
use crate::error::{Error, Result};

/// Additive constant −(1 − ln 2)/(4π) fixing ∫ G(x, ·) dv = 0.
pub const GREEN_CONSTANT: f64 = -(1.0 - LN_2) / (4.0 * PI);

/// Green's function of −Δ on the round sphere with zero mean:
/// G(x, y) = −ln(1 − x·y)/(4π) − (1 − ln 2)/(4π).
pub fn green(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    if x.dot(y) > 1.0 - 1e-14 {
        return Err(Error::Singular("Green's function on the diagonal".into()));
    }
    Ok(green_unchecked(x, y))
}

pub fn green_unchecked(x: &SpherePoint, y: &SpherePoint) -> f64 {
    -x.one_minus_dot(y).ln() / (4.0 * PI) + GREEN_CONSTANT
}

/// −4π G(x, y) = ln(1 − x·y) + 1 − ln 2, the exponent building h.
pub fn neg_four_pi_green(x: &SpherePoint, y: &SpherePoint) -> f64 {
    x.one_minus_dot(y).ln() + 1.0 - LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_and_antipodal_values() {
        let x = SpherePoint::north();
        let y = SpherePoint::new(1.0, 0.0, 0.0).unwrap();
        let g = green(&x, &y).unwrap();
        assert!((g - GREEN_CONSTANT).abs() < 1e-16);
        assert!((g + 0.024_418_571_507_784_77).abs() < 1e-15);
        let ga = green(&x, &x.antipode()).unwrap();
        assert!((ga - (-LN_2 / (4.0 * PI) + GREEN_CONSTANT)).abs() < 1e-15);
        assert!(green(&x, &x).is_err());
    }

    #[test]
    fn symmetric() {
        for i in 0..20 {
            let x = SpherePoint::from_angles(0.1 + 0.15 * i as f64, 0.7 * i as f64);
            let y = SpherePoint::from_angles(2.9 - 0.13 * i as f64, 1.9 * i as f64 + 0.3);
            assert_eq!(green(&x, &y).unwrap(), green(&y, &x).unwrap());
        }
    }
}
