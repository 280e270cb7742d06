//! Blow-up side: the location functional f_h, its critical configurations,
//! the leading rate term of ρₙ − 8kπ and classification of solve sequences.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{build_h, par_map, PotentialSpec};
use crate::solver::{mass_near, normalized_density, SolveResult};
use crate::sphere::{geodesic_distance, green_unchecked, SphereGrid, SpherePoint};

/// Smallest pairwise separation of an admissible configuration.
pub const MIN_SEPARATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfiguration {
    pub points: Vec<SpherePoint>,
    /// Heights λ_j; empty when none are attached.
    pub heights: Vec<f64>,
    pub separation: f64,
}

impl BlowupConfiguration {
    /// Checks pairwise separation and the distance to the singular points.
    pub fn new(points: Vec<SpherePoint>, heights: Vec<f64>, spec: &PotentialSpec, exclusion: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a configuration needs at least one point".into()));
        }
        if !heights.is_empty() && heights.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} heights for {} points",
                heights.len(),
                points.len()
            )));
        }
        let separation = min_separation(&points);
        if separation <= MIN_SEPARATION {
            return Err(Error::Collision(separation));
        }
        for q in &points {
            if let Some((i, d)) = spec.singularities.nearest(q) {
                if d <= exclusion {
                    return Err(Error::InvalidArgument(format!(
                        "point at distance {d:e} from singular point {i}"
                    )));
                }
            }
        }
        Ok(Self { points, heights, separation })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn with_heights(mut self, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != self.points.len() {
            return Err(Error::InvalidArgument("one height per point".into()));
        }
        self.heights = heights;
        Ok(self)
    }
}

fn min_separation(points: &[SpherePoint]) -> f64 {
    let mut sep = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            sep = sep.min(geodesic_distance(&points[i], &points[j]));
        }
    }
    sep
}

/// f_h(x₁,…,x_k) = Σ_j (log h(x_j) + Σ_{l≠j} G(x_l, x_j)).
pub fn location_functional(points: &[SpherePoint], spec: &PotentialSpec) -> Result<f64> {
    let sep = min_separation(points);
    if sep < 1e-9 {
        return Err(Error::Collision(sep));
    }
    let mut f = 0.0;
    for (j, x) in points.iter().enumerate() {
        let lh = spec.log_h(x);
        if !lh.is_finite() {
            return Err(Error::Singular(format!("log h = {lh} at {:?}", x.coords())));
        }
        f += lh;
        for (l, y) in points.iter().enumerate() {
            if l != j {
                f += green_unchecked(y, x);
            }
        }
    }
    Ok(f)
}

fn f_unchecked(points: &[SpherePoint], spec: &PotentialSpec) -> f64 {
    location_functional(points, spec).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalSearchOptions {
    pub seed: u64,
    pub separation: f64,
    /// Starts and results closer than this to a singular point are dropped.
    pub exclusion_radius: f64,
    pub tol_grad: f64,
    /// Finite-difference scale for gradients; Hessians use ten times it.
    pub fd_scale: f64,
    pub max_newton: usize,
    /// Configurations closer than this (after matching points) are merged.
    pub cluster_radius: f64,
    /// Eigenvalues below this in modulus count towards the nullity.
    pub hessian_threshold: f64,
}

impl Default for CriticalSearchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            separation: MIN_SEPARATION,
            exclusion_radius: 0.05,
            tol_grad: 1e-7,
            fd_scale: 1e-5,
            max_newton: 100,
            cluster_radius: 1e-4,
            hessian_threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalConfiguration {
    pub configuration: BlowupConfiguration,
    pub f_h: f64,
    pub gradient_norm: f64,
    /// Negative eigenvalues of the Hessian on (S²)^k.
    pub index: usize,
    /// Eigenvalues below the threshold in modulus.
    pub nullity: usize,
    pub hessian_eigenvalues: Vec<f64>,
    /// Start that first reached this configuration.
    pub start: usize,
    pub iterations: usize,
    /// Number of starts that reached it.
    pub hits: usize,
}

/// Product chart: point j moves to x_j.gnomonic(y_{2j}, y_{2j+1}).
struct Chart {
    base: Vec<SpherePoint>,
    frames: Vec<([f64; 3], [f64; 3])>,
}

impl Chart {
    fn at(points: &[SpherePoint]) -> Self {
        Self { base: points.to_vec(), frames: points.iter().map(|p| p.tangent_frame()).collect() }
    }

    fn dim(&self) -> usize {
        2 * self.base.len()
    }

    fn points(&self, y: &[f64]) -> Vec<SpherePoint> {
        self.base
            .iter()
            .zip(&self.frames)
            .enumerate()
            .map(|(j, (p, (e1, e2)))| p.gnomonic_in(e1, e2, y[2 * j], y[2 * j + 1]))
            .collect()
    }

    fn f(&self, spec: &PotentialSpec, y: &[f64]) -> f64 {
        f_unchecked(&self.points(y), spec)
    }

    fn gradient(&self, spec: &PotentialSpec, eps: f64) -> DVector<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        DVector::from_fn(n, |i, _| {
            y[i] = eps;
            let fp = self.f(spec, &y);
            y[i] = -eps;
            let fm = self.f(spec, &y);
            y[i] = 0.0;
            (fp - fm) / (2.0 * eps)
        })
    }

    fn hessian(&self, spec: &PotentialSpec, eps: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        let f0 = self.f(spec, &y);
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            y[i] = eps;
            let fp = self.f(spec, &y);
            y[i] = -eps;
            let fm = self.f(spec, &y);
            y[i] = 0.0;
            h[(i, i)] = (fp - 2.0 * f0 + fm) / (eps * eps);
            for j in 0..i {
                let mut corner = |a: f64, b: f64| {
                    y[i] = a;
                    y[j] = b;
                    let v = self.f(spec, &y);
                    y[i] = 0.0;
                    y[j] = 0.0;
                    v
                };
                let v = (corner(eps, eps) - corner(eps, -eps) - corner(-eps, eps) + corner(-eps, -eps))
                    / (4.0 * eps * eps);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }
}

fn admissible(points: &[SpherePoint], spec: &PotentialSpec, opts: &CriticalSearchOptions) -> bool {
    min_separation(points) > opts.separation
        && points
            .iter()
            .all(|q| spec.singularities.nearest(q).is_none_or(|(_, d)| d > opts.exclusion_radius))
}

/// Damped Newton on ∇f_h = 0 in the product gnomonic chart, re-centred at
/// every step. Returns the final points, gradient norm and iterations.
fn newton(spec: &PotentialSpec, start: Vec<SpherePoint>, opts: &CriticalSearchOptions) -> Option<(Vec<SpherePoint>, f64, usize)> {
    let mut x = start;
    let eps_g = opts.fd_scale;
    let eps_h = 10.0 * opts.fd_scale;
    let mut chart = Chart::at(&x);
    let mut g = chart.gradient(spec, eps_g);
    for it in 0..opts.max_newton {
        let gn = g.norm();
        if !gn.is_finite() {
            return None;
        }
        if gn < 1e-2 * opts.tol_grad {
            return Some((x, gn, it));
        }
        let eig = SymmetricEigen::new(chart.hessian(spec, eps_h));
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let mut step = DVector::zeros(chart.dim());
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            if lam.abs() > 1e-10 * scale.max(1.0) {
                step -= v * (v.dot(&g) / lam);
            }
        }
        let sn = step.amax();
        if sn > 0.2 {
            step *= 0.2 / sn;
        }
        // accept the first step length that reduces |∇f|
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..12 {
            let pts = chart.points((step.clone() * t).as_slice());
            if admissible(&pts, spec, opts) {
                let c = Chart::at(&pts);
                let gc = c.gradient(spec, eps_g);
                if gc.norm() < gn {
                    next = Some((pts, c, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((pts, c, gc)) = next else {
            return Some((x, gn, it));
        };
        x = pts;
        chart = c;
        g = gc;
    }
    let gn = g.norm();
    Some((x, gn, opts.max_newton))
}

/// Distance between configurations after greedy matching of their points.
fn config_distance(a: &[SpherePoint], b: &[SpherePoint]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for p in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, q)| (j, geodesic_distance(p, q)))
            .fold((usize::MAX, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        if j == usize::MAX {
            return f64::INFINITY;
        }
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

fn canonical(mut points: Vec<SpherePoint>) -> Vec<SpherePoint> {
    points.sort_by(|a, b| a.coords().partial_cmp(&b.coords()).unwrap());
    points
}

fn random_point(rng: &mut ChaCha8Rng) -> SpherePoint {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    SpherePoint::from_angles(z.acos(), phi)
}

/// Start configurations: k-tuples of grid nodes drawn from a seeded stream
/// (the first n of 2n starts coincide with the n starts). For k = 1 every
/// admissible grid node is used in addition.
fn starts(k: usize, spec: &PotentialSpec, grid: &SphereGrid, n_starts: usize, opts: &CriticalSearchOptions) -> Vec<Vec<SpherePoint>> {
    let mut out = Vec::new();
    if k == 1 {
        out.extend(grid.points().iter().filter(|p| admissible(&[**p], spec, opts)).map(|p| vec![*p]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..n_starts {
        let mut tries = 0;
        loop {
            let pts: Vec<SpherePoint> = (0..k)
                .map(|_| {
                    let r = random_point(&mut rng);
                    *grid
                        .points()
                        .iter()
                        .min_by(|a, b| geodesic_distance(a, &r).partial_cmp(&geodesic_distance(b, &r)).unwrap())
                        .unwrap()
                })
                .collect();
            tries += 1;
            if admissible(&pts, spec, opts) || tries > 100 {
                out.push(pts);
                break;
            }
        }
    }
    out
}

/// Multi-start Newton search for critical points of f_h on (S²)^k minus the
/// fattened diagonal and the exclusion discs around the singular points.
pub fn find_critical_configurations(
    k: usize,
    spec: &PotentialSpec,
    grid: &SphereGrid,
    n_starts: usize,
) -> Result<Vec<CriticalConfiguration>> {
    find_critical_configurations_with(k, spec, grid, n_starts, &CriticalSearchOptions::default())
}

pub fn find_critical_configurations_with(
    k: usize,
    spec: &PotentialSpec,
    grid: &SphereGrid,
    n_starts: usize,
    opts: &CriticalSearchOptions,
) -> Result<Vec<CriticalConfiguration>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    spec.validate()?;
    let starts = starts(k, spec, grid, n_starts, opts);
    let found = par_map(&starts, |_, s| if admissible(s, spec, opts) { newton(spec, s.clone(), opts) } else { None });

    let mut clusters: Vec<CriticalConfiguration> = Vec::new();
    for (start, res) in found.into_iter().enumerate() {
        let Some((pts, gn, iterations)) = res else { continue };
        if gn >= opts.tol_grad || !admissible(&pts, spec, opts) {
            continue;
        }
        if let Some(c) = clusters
            .iter_mut()
            .find(|c| config_distance(&c.configuration.points, &pts) <= opts.cluster_radius)
        {
            c.hits += 1;
            continue;
        }
        let chart = Chart::at(&pts);
        let eig = SymmetricEigen::new(chart.hessian(spec, 10.0 * opts.fd_scale));
        let mut lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let index = lam.iter().filter(|l| **l < -opts.hessian_threshold).count();
        let nullity = lam.iter().filter(|l| l.abs() <= opts.hessian_threshold).count();
        let f_h = location_functional(&pts, spec)?;
        let pts = canonical(pts);
        let separation = min_separation(&pts);
        clusters.push(CriticalConfiguration {
            configuration: BlowupConfiguration { points: pts, heights: Vec::new(), separation },
            f_h,
            gradient_norm: gn,
            index,
            nullity,
            hessian_eigenvalues: lam,
            start,
            iterations,
            hits: 1,
        });
    }
    clusters.sort_by(|a, b| {
        a.f_h.partial_cmp(&b.f_h).unwrap().then_with(|| {
            let ca: Vec<[f64; 3]> = a.configuration.points.iter().map(|p| p.coords()).collect();
            let cb: Vec<[f64; 3]> = b.configuration.points.iter().map(|p| p.coords()).collect();
            ca.partial_cmp(&cb).unwrap()
        })
    });
    Ok(clusters)
}

/// One summand h(q)⁻¹(Δ log h(q) + 2(k − 1)) λ e^{−λ}.
pub fn rate_term(h_q: f64, laplacian_log_h: f64, k: usize, lambda: f64) -> f64 {
    (laplacian_log_h + 2.0 * (k as f64 - 1.0)) / h_q * lambda * (-lambda).exp()
}

/// Leading term of ρₙ − 8kπ for a configuration with heights attached.
pub fn blowup_rate(config: &BlowupConfiguration, spec: &PotentialSpec, k: usize) -> Result<f64> {
    if config.heights.len() != config.points.len() {
        return Err(Error::InvalidArgument("blow-up rate needs one height per point".into()));
    }
    let mut total = 0.0;
    for (q, &lambda) in config.points.iter().zip(&config.heights) {
        let lap = spec.laplacian_log_h(q, 1e-4);
        total += rate_term(spec.h(q), lap, k, lambda);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    /// Sup-norm below which a sequence is never called blowing up.
    pub ceiling: f64,
    /// Geodesic radius of the mass integration ball.
    pub mass_radius: f64,
    /// Relative tolerance on the quantized cluster masses.
    pub mass_tol: f64,
    /// Clusters must carry at least this share of ρ.
    pub min_share: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { ceiling: 5.0, mass_radius: 0.3, mass_tol: 0.1, min_share: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: SpherePoint,
    /// ρ ∫_{B(center, r)} h e^u / ∫ h e^u at the last iterate.
    pub mass: f64,
    /// 8π, or 8π(1 + α_j) when the center is the singular point p_j.
    pub expected: f64,
    pub singular_point: Option<usize>,
    pub within_tolerance: bool,
    pub h_at_center: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "alternative", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Alternative {
    Bounded,
    Blowup { clusters: Vec<Cluster> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub alternative: Alternative,
    pub rhos: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Location of max u along the sequence.
    pub argmax: Vec<SpherePoint>,
    pub options: ClassifyOptions,
}

impl SequenceReport {
    pub fn is_blowup(&self) -> bool {
        matches!(self.alternative, Alternative::Blowup { .. })
    }
}

/// Sorts a solve sequence into the bounded/blow-up alternative.
///
/// BLOWUP needs the last sup-norm at or above the ceiling and non-decreasing
/// sup-norms over the last three results; clusters are found greedily from
/// the maxima of u at the last iterate.
pub fn classify_sequence(results: &[SolveResult], spec: &PotentialSpec, opts: &ClassifyOptions) -> Result<SequenceReport> {
    if results.len() < 3 {
        return Err(Error::InsufficientData(format!("{} results, need at least 3", results.len())));
    }
    let grid = results[0].u.grid().clone();
    if results.iter().any(|r| !r.u.same_grid(&results[0].u)) {
        return Err(Error::InsufficientData("results live on different grids".into()));
    }
    if results.windows(2).any(|w| !(w[1].rho > w[0].rho)) {
        return Err(Error::InsufficientData("rho must increase along the sequence".into()));
    }
    let rhos: Vec<f64> = results.iter().map(|r| r.rho).collect();
    let sup_norms: Vec<f64> = results.iter().map(|r| r.u.sup_norm()).collect();
    let argmax: Vec<SpherePoint> = results.iter().map(|r| *grid.point(r.u.argmax().0)).collect();

    let n = sup_norms.len();
    let growing = sup_norms[n - 3..].windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
    let alternative = if sup_norms[n - 1] >= opts.ceiling && growing {
        let last = &results[n - 1];
        let h = build_h(spec, &grid)?;
        let q = normalized_density(&last.u, &h)?;
        Alternative::Blowup { clusters: clusters(&grid, &last.u.values(), q.values(), last.rho, spec, opts) }
    } else {
        Alternative::Bounded
    };
    Ok(SequenceReport { alternative, rhos, sup_norms, argmax, options: opts.clone() })
}

fn clusters(grid: &SphereGrid, u: &[f64], q: &[f64], rho: f64, spec: &PotentialSpec, opts: &ClassifyOptions) -> Vec<Cluster> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|a, b| u[*b].partial_cmp(&u[*a]).unwrap().then(a.cmp(b)));
    let mut out: Vec<Cluster> = Vec::new();
    for i in order {
        // a singular point near the peak is the concentration point itself
        let singular = spec
            .singularities
            .nearest(grid.point(i))
            .filter(|(_, d)| *d <= 0.5 * opts.mass_radius)
            .map(|(j, _)| j);
        let x = singular.map_or(grid.point(i), |j| &spec.singularities.items()[j].point);
        if out.iter().any(|c| geodesic_distance(&c.center, x) <= 2.0 * opts.mass_radius) {
            continue;
        }
        let mass = rho * mass_near(grid, q, x, opts.mass_radius);
        if mass < opts.min_share * rho {
            // nodes are visited by decreasing u; lower maxima carry less mass
            if out.is_empty() {
                continue;
            }
            break;
        }
        let expected = 8.0 * PI * (1.0 + singular.map_or(0.0, |j| spec.singularities.items()[j].alpha));
        out.push(Cluster {
            center: *x,
            mass,
            expected,
            singular_point: singular,
            within_tolerance: (mass - expected).abs() <= opts.mass_tol * expected,
            h_at_center: spec.h(x),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{KExpr, SingularityConfig};

    #[test]
    fn single_point_functional_is_log_h() {
        let spec = PotentialSpec::new(
            KExpr::affine(2.0, vec![(0.3, KExpr::coordinate(1))]),
            SingularityConfig::from_pairs(&[(SpherePoint::north(), 0.7)]).unwrap(),
        );
        let x = SpherePoint::new(0.2, -0.5, 0.1).unwrap();
        assert_eq!(location_functional(&[x], &spec).unwrap(), spec.log_h(&x));
    }

    #[test]
    fn collisions_are_rejected() {
        let spec = PotentialSpec::regular(KExpr::default());
        let x = SpherePoint::north();
        assert!(matches!(location_functional(&[x, x], &spec), Err(Error::Collision(_))));
        let y = SpherePoint::from_angles(5e-4, 0.0);
        assert!(matches!(BlowupConfiguration::new(vec![x, y], vec![], &spec, 0.05), Err(Error::Collision(_))));
    }

    #[test]
    fn rate_term_by_substitution() {
        let r = rate_term(1.0, -2.0, 1, 10.0);
        assert!((r - (-9.079_985_952_496_97e-4)).abs() < 1e-15);
    }
}
