//! Independent oracles shared by the integration tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use liouville_sphere::series::{OrderVector, EXPONENT_TOL};

/// Expands the product term by term: one monomial from each factor.
pub fn brute_force(alphas: &[f64], x_max: f64) -> Vec<(f64, i64)> {
    let m = alphas.len();
    // prefactor as (exponent, coefficient) monomials
    let prefactor: Vec<(f64, i64)> = match m {
        0 => vec![(0.0, 1), (1.0, -2), (2.0, 1)],
        1 => vec![(0.0, 1), (1.0, -1)],
        _ => {
            let mut acc = vec![(0.0, 1i64)];
            for _ in 0..m - 2 {
                let mut next = Vec::new();
                for &(e, c) in &acc {
                    let mut k = 0.0;
                    while e + k < x_max {
                        next.push((e + k, c));
                        k += 1.0;
                    }
                }
                acc = next;
            }
            acc
        }
    };
    let mut terms: Vec<(f64, i64)> = Vec::new();
    for mask in 0u32..(1 << m) {
        let mut e = 0.0;
        let mut sign = 1;
        for (i, a) in alphas.iter().enumerate() {
            if mask & (1 << i) != 0 {
                e += 1.0 + a;
                sign = -sign;
            }
        }
        for &(pe, pc) in &prefactor {
            if pe + e < x_max {
                terms.push((pe + e, sign * pc));
            }
        }
    }
    terms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, i64)> = Vec::new();
    for (e, c) in terms {
        match merged.last_mut() {
            Some(last) if (last.0 - e).abs() <= EXPONENT_TOL => last.1 += c,
            _ => merged.push((e, c)),
        }
    }
    merged.retain(|t| t.1 != 0);
    merged
}

pub fn random_orders(rng: &mut ChaCha8Rng) -> (Vec<f64>, OrderVector) {
    let m = rng.gen_range(0..=5);
    if rng.gen_bool(0.5) {
        // rational orders collide often, which exercises exact merging
        let fracs: Vec<(i64, i64)> = (0..m)
            .map(|_| {
                let d = rng.gen_range(1..=4);
                (rng.gen_range(-d + 1..=3 * d), d)
            })
            .collect();
        let alphas: Vec<f64> = fracs.iter().map(|(n, d)| *n as f64 / *d as f64).collect();
        (alphas, OrderVector::from_rationals(&fracs).unwrap())
    } else {
        let alphas: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.9..3.0)).collect();
        let o = OrderVector::new(&alphas).unwrap();
        (alphas, o)
    }
}
