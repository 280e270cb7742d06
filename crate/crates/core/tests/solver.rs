use std::f64::consts::PI;
use std::sync::Arc;

use liouville_sphere::potential::{build_h, KExpr, PotentialSpec, SingularityConfig};
use liouville_sphere::solver::{
    dilation_family, el_residual, evaluate_j, fixed_point_map, minimize, troyanov_gap, Init, SolveStatus,
    SolverOptions,
};
use liouville_sphere::sphere::{ScalarField, SphereGrid, SpherePoint};
use liouville_sphere::Error;

fn grid(l: usize) -> Arc<SphereGrid> {
    SphereGrid::for_band_limit(l).unwrap()
}

fn random_field(g: &Arc<SphereGrid>, seed: u64, lmax: usize, amp: f64) -> ScalarField {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut c = liouville_sphere::sphere::SpectralCoeffs::zeros(g.l_max());
    for l in 1..=lmax {
        for m in -(l as i64)..=l as i64 {
            c.set(l, m, amp * next() / (l as f64));
        }
    }
    ScalarField::from_coeffs(g, &c)
}

fn unit_h(g: &Arc<SphereGrid>) -> ScalarField {
    ScalarField::constant(g, 1.0)
}

#[test]
fn dilations_keep_j_at_zero_for_unit_potential() {
    let g = grid(63);
    let h = unit_h(&g);
    let p = SpherePoint::new(0.1, 0.4, -0.7).unwrap();
    for t in [1.0, 2.0, 3.0, 4.0] {
        let u = dilation_family(t, &p, &g).unwrap();
        let j = evaluate_j(&u, 8.0 * PI, &h).unwrap();
        assert!(j.abs() < 5e-3, "t = {t}: J = {j}");
        assert!((u.map(f64::exp).integrate() - 4.0 * PI).abs() < 1e-6);
    }
}

#[test]
fn directional_derivative_matches_residual() {
    let g = grid(23);
    let spec = PotentialSpec::new(
        KExpr::exp(KExpr::harmonics(&[(1, 1, 0.3), (2, 0, 0.2)])),
        SingularityConfig::from_pairs(&[(SpherePoint::new(0.3, 0.2, 0.9).unwrap(), 0.4)]).unwrap(),
    );
    let h = build_h(&spec, &g).unwrap();
    for seed in 0..4 {
        let u = random_field(&g, seed, 8, 0.8);
        let v = random_field(&g, seed + 100, 8, 1.0);
        let rho = 3.0 + 5.0 * seed as f64;
        let eps = 1e-5;
        let jp = evaluate_j(&u.zip_map(&v, |a, b| a + eps * b).unwrap(), rho, &h).unwrap();
        let jm = evaluate_j(&u.zip_map(&v, |a, b| a - eps * b).unwrap(), rho, &h).unwrap();
        let fd = (jp - jm) / (2.0 * eps);
        let an = el_residual(&u, rho, &h).unwrap().inner(&v).unwrap();
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
    }
}

#[test]
fn residual_is_mean_zero_and_shift_invariant() {
    let g = grid(31);
    let spec = PotentialSpec::new(
        KExpr::default(),
        SingularityConfig::antipodal(SpherePoint::new(1.0, 1.0, 0.0).unwrap(), 0.3, 1.7).unwrap(),
    );
    let h = build_h(&spec, &g).unwrap();
    let u = random_field(&g, 5, 10, 1.5);
    let r = el_residual(&u, 30.0, &h).unwrap();
    assert!(r.integrate().abs() < 1e-9);
    let r2 = el_residual(&u.add_constant(-7.0), 30.0, &h).unwrap();
    for (a, b) in r.values().iter().zip(r2.values()) {
        assert!((a - b).abs() < 1e-9);
    }
    let j1 = evaluate_j(&u, 30.0, &h).unwrap();
    let j2 = evaluate_j(&u.add_constant(-7.0), 30.0, &h).unwrap();
    assert!((j1 - j2).abs() < 1e-9);
}

#[test]
fn j_is_stable_under_refinement() {
    let f = |x: &SpherePoint| (0.7 * x.x() + 0.2 * x.z() * x.y()).sin() + 0.3 * x.z();
    let spec = PotentialSpec::regular(KExpr::affine(1.5, vec![(0.4, KExpr::coordinate(3))]));
    let mut vals = Vec::new();
    for l in [63, 127] {
        let g = grid(l);
        let h = build_h(&spec, &g).unwrap();
        vals.push(evaluate_j(&ScalarField::from_fn(&g, f), 11.0, &h).unwrap());
    }
    assert!((vals[0] - vals[1]).abs() < 1e-6, "{vals:?}");
}

#[test]
fn saddle_regime_converges_in_axisymmetric_class() {
    let g = grid(63);
    let spec = PotentialSpec::new(
        KExpr::default(),
        SingularityConfig::antipodal(SpherePoint::north(), 0.6, 0.9).unwrap(),
    );
    let h = build_h(&spec, &g).unwrap();
    let opts = SolverOptions { axisymmetric: true, ..SolverOptions::default() };
    let r = minimize(12.0 * PI, &h, &Init::Zero, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Converged, "residual {}", r.residual);
    assert!(r.residual <= 1e-6);
    assert!(r.u.mean().abs() < 1e-10);
    assert!(el_residual(&r.u, 12.0 * PI, &h).unwrap().sup_norm() <= 1e-6);
    let t = fixed_point_map(&r.u, 12.0 * PI, &h).unwrap();
    let sum = t.zip_map(&r.u, |a, b| a + b).unwrap();
    // ‖Δ⁻¹‖ from residual to T(u) + u is at most 1/2 on mean-zero fields
    assert!(sum.sup_norm() <= 1e-6 * 0.5 * (g.n_coeffs() as f64).sqrt());
}

fn critical_run(l: usize) -> (f64, liouville_sphere::solver::SolveResult) {
    let g = grid(l);
    let spec = PotentialSpec::new(
        KExpr::default(),
        SingularityConfig::from_pairs(&[(SpherePoint::north(), 1.0)]).unwrap(),
    );
    let h = build_h(&spec, &g).unwrap();
    let bound = -8.0 * PI * h.max().ln();
    let init = Init::Noise { l_max: 2, amplitude: 0.05, seed: 3 };
    let r = match minimize(8.0 * PI, &h, &init, &SolverOptions::default()) {
        Ok(r) => r,
        Err(Error::MaxIter { .. }) => panic!("no blow-up detected"),
        Err(e) => panic!("{e}"),
    };
    (bound, r)
}

#[test]
fn critical_value_blows_up_above_the_sharp_bound() {
    let (bound, r) = critical_run(63);
    assert_eq!(r.status, SolveStatus::BlowupSuspected);
    assert!(r.j > bound);
    for w in r.trace.windows(2) {
        assert!(w[1].j <= w[0].j);
    }
    assert!(r.argmax.z() < -0.99, "concentrates at the maximum of h");
}

#[test]
fn critical_value_approaches_the_sharp_bound_on_a_fine_grid() {
    let (bound, r) = critical_run(255);
    assert_eq!(r.status, SolveStatus::BlowupSuspected);
    assert!(r.j > bound && r.j - bound <= 0.05, "J - bound = {}", r.j - bound);
}

#[test]
fn onofri_gap_is_nonnegative_and_sharp_along_dilations() {
    let g = grid(63);
    let spec = PotentialSpec::new(
        KExpr::default(),
        SingularityConfig::from_pairs(&[(SpherePoint::north(), 1.0)]).unwrap(),
    );
    let h = build_h(&spec, &g).unwrap();
    let orders = spec.singularities.orders();
    let c = h.max().ln();
    for seed in 0..6 {
        let u = random_field(&g, seed, 6, 2.0);
        assert!(troyanov_gap(&u, &h, &orders, c).unwrap() >= -5e-3);
    }
    let mut last = f64::INFINITY;
    for t in [1.0, 2.0, 4.0, 8.0] {
        let u = dilation_family(t, &SpherePoint::south(), &g).unwrap();
        let gap = troyanov_gap(&u, &h, &orders, c).unwrap();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 0.1, "gap along dilations {last}");
}
