//! Singular potentials h = K·exp(−4π Σ αᵢ G(·, pᵢ)) and the differential
//! data of h used by the existence criteria.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::OrderVector;
use crate::sphere::{geodesic_distance, real_ylm, ScalarField, SphereGrid, SpherePoint};

/// Smooth positive factor K. Only constants, finite spherical-harmonic
/// sums, coordinates, exponentials and affine combinations are accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KExpr {
    Constant { value: f64 },
    /// Cartesian coordinate x₁, x₂ or x₃ (`axis` ∈ {1, 2, 3}).
    Coordinate { axis: usize },
    /// Σ c·Y_{l,m} with orthonormal real harmonics.
    Harmonics { terms: Vec<HarmonicTerm> },
    Affine { offset: f64, terms: Vec<AffineTerm> },
    Exp { arg: Box<KExpr> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub l: usize,
    pub m: i64,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTerm {
    pub coeff: f64,
    pub expr: KExpr,
}

impl Default for KExpr {
    fn default() -> Self {
        KExpr::Constant { value: 1.0 }
    }
}

impl KExpr {
    pub fn constant(value: f64) -> Self {
        KExpr::Constant { value }
    }

    pub fn coordinate(axis: usize) -> Self {
        KExpr::Coordinate { axis }
    }

    /// offset + Σ cᵢ eᵢ
    pub fn affine(offset: f64, terms: Vec<(f64, KExpr)>) -> Self {
        KExpr::Affine {
            offset,
            terms: terms.into_iter().map(|(coeff, expr)| AffineTerm { coeff, expr }).collect(),
        }
    }

    pub fn exp(arg: KExpr) -> Self {
        KExpr::Exp { arg: Box::new(arg) }
    }

    pub fn harmonics(terms: &[(usize, i64, f64)]) -> Self {
        KExpr::Harmonics {
            terms: terms.iter().map(|&(l, m, coeff)| HarmonicTerm { l, m, coeff }).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KExpr::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidArgument("non-finite constant in K".into()))
            }
            KExpr::Coordinate { axis } if !(1..=3).contains(axis) => {
                Err(Error::InvalidArgument(format!("coordinate axis {axis} not in 1..=3")))
            }
            KExpr::Harmonics { terms } => {
                for t in terms {
                    if t.m.unsigned_abs() as usize > t.l {
                        return Err(Error::InvalidArgument(format!("harmonic |m| > l: ({}, {})", t.l, t.m)));
                    }
                }
                Ok(())
            }
            KExpr::Affine { terms, .. } => terms.iter().try_for_each(|t| t.expr.validate()),
            KExpr::Exp { arg } => arg.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &SpherePoint) -> f64 {
        match self {
            KExpr::Constant { value } => *value,
            KExpr::Coordinate { axis } => x.coords()[axis - 1],
            KExpr::Harmonics { terms } => terms.iter().map(|t| t.coeff * real_ylm(t.l, t.m, x)).sum(),
            KExpr::Affine { offset, terms } => {
                offset + terms.iter().map(|t| t.coeff * t.expr.eval(x)).sum::<f64>()
            }
            KExpr::Exp { arg } => arg.eval(x).exp(),
        }
    }

    /// ln K, evaluated without overflow for exponentials.
    pub fn ln_eval(&self, x: &SpherePoint) -> f64 {
        match self {
            KExpr::Exp { arg } => arg.eval(x),
            _ => self.eval(x).ln(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            KExpr::Constant { .. } => true,
            KExpr::Harmonics { terms } => terms.iter().all(|t| t.l == 0 || t.coeff == 0.0),
            KExpr::Affine { terms, .. } => terms.iter().all(|t| t.coeff == 0.0 || t.expr.is_constant()),
            KExpr::Exp { arg } => arg.is_constant(),
            KExpr::Coordinate { .. } => false,
        }
    }

    /// Numerical check of invariance under rotations about `axis`.
    pub fn is_axisymmetric(&self, axis: &SpherePoint) -> bool {
        if self.is_constant() {
            return true;
        }
        for i in 1..12 {
            let theta = std::f64::consts::PI * i as f64 / 12.0;
            let reference = self.eval(&axis.rotate_from_north(&SpherePoint::from_angles(theta, 0.0)));
            for j in 1..8 {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / 8.0 + 0.1;
                let v = self.eval(&axis.rotate_from_north(&SpherePoint::from_angles(theta, phi)));
                if (v - reference).abs() > 1e-10 * reference.abs().max(1.0) {
                    return false;
                }
            }
        }
        true
    }
}

/// A singular point with its order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub point: SpherePoint,
    pub alpha: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Singularity>", into = "Vec<Singularity>")]
pub struct SingularityConfig {
    items: Vec<Singularity>,
}

impl TryFrom<Vec<Singularity>> for SingularityConfig {
    type Error = Error;

    fn try_from(items: Vec<Singularity>) -> Result<Self> {
        Self::new(items)
    }
}

impl From<SingularityConfig> for Vec<Singularity> {
    fn from(c: SingularityConfig) -> Self {
        c.items
    }
}

impl SingularityConfig {
    pub fn new(items: Vec<Singularity>) -> Result<Self> {
        for s in &items {
            if !(s.alpha.is_finite() && s.alpha > -1.0) {
                return Err(Error::InvalidOrder(s.alpha));
            }
        }
        for i in 0..items.len() {
            for j in 0..i {
                if items[i].point.one_minus_dot(&items[j].point) < 1e-12 {
                    return Err(Error::InvalidArgument(format!("singular points {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { items })
    }

    pub fn none() -> Self {
        Self { items: Vec::new() }
    }

    pub fn from_pairs(pairs: &[(SpherePoint, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(point, alpha)| Singularity { point, alpha }).collect())
    }

    /// Two antipodal points p₁ and −p₁ with orders α₁, α₂.
    pub fn antipodal(p1: SpherePoint, alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::from_pairs(&[(p1, alpha1), (p1.antipode(), alpha2)])
    }

    pub fn items(&self) -> &[Singularity] {
        &self.items
    }

    pub fn m(&self) -> usize {
        self.items.len()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.items.iter().map(|s| s.alpha).sum()
    }

    pub fn all_nonneg(&self) -> bool {
        self.items.iter().all(|s| s.alpha >= 0.0)
    }

    pub fn all_pos(&self) -> bool {
        self.items.iter().all(|s| s.alpha > 0.0)
    }

    pub fn antipodal_pair(&self) -> bool {
        self.items.len() == 2 && {
            let (a, b) = (&self.items[0].point, &self.items[1].point);
            a.dot(b) < -1.0 + 1e-12
        }
    }

    pub fn orders(&self) -> OrderVector {
        let alphas: Vec<f64> = self.items.iter().map(|s| s.alpha).collect();
        OrderVector::new(&alphas).expect("orders validated on construction")
    }

    /// Distance to the nearest singular point (∞ when m = 0).
    pub fn nearest(&self, x: &SpherePoint) -> Option<(usize, f64)> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, s)| (i, geodesic_distance(x, &s.point)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(default)]
    pub k: KExpr,
    #[serde(default)]
    pub singularities: SingularityConfig,
}

impl PotentialSpec {
    pub fn new(k: KExpr, singularities: SingularityConfig) -> Self {
        Self { k, singularities }
    }

    pub fn regular(k: KExpr) -> Self {
        Self { k, singularities: SingularityConfig::none() }
    }

    /// ln h(x) = ln K(x) + Σ αᵢ (ln(1 − x·pᵢ) + 1 − ln 2).
    pub fn log_h(&self, x: &SpherePoint) -> f64 {
        let mut v = self.k.ln_eval(x);
        for s in self.singularities.items() {
            v += s.alpha * (x.one_minus_dot(&s.point).ln() + 1.0 - LN_2);
        }
        v
    }

    pub fn h(&self, x: &SpherePoint) -> f64 {
        self.log_h(x).exp()
    }

    /// Δ_{g₀} ln K at x by central differences in a gnomonic chart.
    pub fn laplacian_log_k(&self, x: &SpherePoint, eps: f64) -> f64 {
        if self.k.is_constant() {
            return 0.0;
        }
        let (e1, e2) = x.tangent_frame();
        let f = |a: f64, b: f64| self.k.ln_eval(&x.gnomonic_in(&e1, &e2, a, b));
        (f(eps, 0.0) + f(-eps, 0.0) + f(0.0, eps) + f(0.0, -eps) - 4.0 * f(0.0, 0.0)) / (eps * eps)
    }

    /// Δ_{g₀} ln h = Δ ln K − Σ αᵢ away from the singular points.
    pub fn laplacian_log_h(&self, x: &SpherePoint, eps: f64) -> f64 {
        self.laplacian_log_k(x, eps) - self.singularities.alpha_sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.k.validate()
    }
}

/// h at every grid node.
pub fn build_h(spec: &PotentialSpec, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
    spec.validate()?;
    let mut values = Vec::with_capacity(grid.len());
    for (node, x) in grid.points().iter().enumerate() {
        let k = spec.k.eval(x);
        if !(k > 0.0) {
            return Err(Error::NonPositiveK { node, value: k });
        }
        for s in spec.singularities.items() {
            if x.one_minus_dot(&s.point) < 1e-14 {
                return Err(Error::Singular(format!("grid node {node} coincides with a singular point")));
            }
        }
        values.push(spec.h(x));
    }
    ScalarField::new(grid.clone(), values)
}

// ---------------------------------------------------------------------------
// Critical points of h

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorseOptions {
    /// Bound on |∇h| for accepted critical points.
    pub tol_grad: f64,
    pub exclusion_radius: f64,
    /// Finite-difference scale for Hessians.
    pub fd_scale: f64,
    pub hessian_threshold: f64,
    pub laplacian_threshold: f64,
    pub max_newton: usize,
    /// Use every `stride`-th grid node as a start.
    pub stride: usize,
    /// Critical points closer than this are merged.
    pub cluster_radius: f64,
}

impl Default for MorseOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-7,
            exclusion_radius: 0.05,
            fd_scale: 1e-4,
            hessian_threshold: 1e-6,
            laplacian_threshold: 1e-8,
            max_newton: 60,
            stride: 1,
            cluster_radius: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Maximum,
    Saddle,
    Minimum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: SpherePoint,
    pub h: f64,
    pub kind: CriticalKind,
    /// Number of negative Hessian eigenvalues.
    pub index: u8,
    pub hessian_eigenvalues: [f64; 2],
    pub laplacian_h: f64,
    pub laplacian_log_h: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseData {
    pub points: Vec<CriticalPoint>,
    /// local maxima
    pub r: u32,
    /// saddles with Δh < 0
    pub s: u32,
    /// local minima
    pub r_prime: u32,
    /// saddles with Δh > 0
    pub s_prime: u32,
    pub unbucketed_saddles: u32,
    pub degenerate: bool,
    pub degenerate_reasons: Vec<String>,
    pub options: MorseOptions,
}

impl MorseData {
    /// Σ (−1)^index over the critical points.
    pub fn euler_sum(&self) -> i64 {
        self.points.iter().map(|p| if p.index % 2 == 0 { 1 } else { -1 }).sum()
    }
}

/// Gradient and Hessian of `f` at the chart origin by central differences.
pub(crate) fn chart_derivatives(f: &dyn Fn(f64, f64) -> f64, eps: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let f0 = f(0.0, 0.0);
    let fp0 = f(eps, 0.0);
    let fm0 = f(-eps, 0.0);
    let f0p = f(0.0, eps);
    let f0m = f(0.0, -eps);
    let fpp = f(eps, eps);
    let fpm = f(eps, -eps);
    let fmp = f(-eps, eps);
    let fmm = f(-eps, -eps);
    let g = [(fp0 - fm0) / (2.0 * eps), (f0p - f0m) / (2.0 * eps)];
    let hxx = (fp0 - 2.0 * f0 + fm0) / (eps * eps);
    let hyy = (f0p - 2.0 * f0 + f0m) / (eps * eps);
    let hxy = (fpp - fpm - fmp + fmm) / (4.0 * eps * eps);
    (g, [[hxx, hxy], [hxy, hyy]])
}

pub(crate) fn sym2_eigen(h: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (h[0][0], h[0][1], h[1][1]);
    let tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (tr - disc, tr + disc);
    let v1 = if b.abs() > 1e-300 {
        let v = [l1 - d, b];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    } else if a <= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

/// Newton iteration on ∇ ln h from `start`; returns the converged point.
fn newton_critical(spec: &PotentialSpec, start: &SpherePoint, opts: &MorseOptions) -> Option<SpherePoint> {
    let mut x = *start;
    let eps = opts.fd_scale;
    for _ in 0..opts.max_newton {
        let (e1, e2) = x.tangent_frame();
        let f = |a: f64, b: f64| spec.log_h(&x.gnomonic_in(&e1, &e2, a, b));
        let (g, hess) = chart_derivatives(&f, eps);
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if !gn.is_finite() {
            return None;
        }
        if gn < 1e-11 {
            return Some(x);
        }
        let (lam, vecs) = sym2_eigen(hess);
        let mut step = [0.0; 2];
        for k in 0..2 {
            if lam[k].abs() > 1e-10 {
                let proj = g[0] * vecs[k][0] + g[1] * vecs[k][1];
                step[0] -= proj / lam[k] * vecs[k][0];
                step[1] -= proj / lam[k] * vecs[k][1];
            }
        }
        let sn = (step[0] * step[0] + step[1] * step[1]).sqrt();
        if sn == 0.0 {
            return Some(x);
        }
        if sn > 0.2 {
            step = [step[0] * 0.2 / sn, step[1] * 0.2 / sn];
        }
        x = x.gnomonic_in(&e1, &e2, step[0], step[1]);
        if sn < 1e-13 {
            return Some(x);
        }
    }
    let (e1, e2) = x.tangent_frame();
    let f = |a: f64, b: f64| spec.log_h(&x.gnomonic_in(&e1, &e2, a, b));
    let (g, _) = chart_derivatives(&f, eps);
    ((g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-9).then_some(x)
}

fn classify(spec: &PotentialSpec, x: SpherePoint, opts: &MorseOptions) -> CriticalPoint {
    let (e1, e2) = x.tangent_frame();
    let f = |a: f64, b: f64| spec.log_h(&x.gnomonic_in(&e1, &e2, a, b));
    let (g, hess) = chart_derivatives(&f, opts.fd_scale);
    let (lam, _) = sym2_eigen(hess);
    let h = spec.h(&x);
    let gl = (g[0] * g[0] + g[1] * g[1]).sqrt();
    let lap_log = hess[0][0] + hess[1][1];
    // Δh = h (Δ ln h + |∇ ln h|²)
    let laplacian_h = h * (lap_log + gl * gl);
    let index = lam.iter().filter(|&&l| l < 0.0).count() as u8;
    let kind = match index {
        2 => CriticalKind::Maximum,
        1 => CriticalKind::Saddle,
        _ => CriticalKind::Minimum,
    };
    CriticalPoint {
        location: x,
        h,
        kind,
        index,
        hessian_eigenvalues: lam,
        laplacian_h,
        laplacian_log_h: lap_log,
        gradient_norm: h * gl,
    }
}

pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}



/// Multi-start search for critical points of h; returns the data with the
/// degeneracy flag set rather than failing.
pub fn morse_analysis(spec: &PotentialSpec, grid: &SphereGrid, opts: &MorseOptions) -> Result<MorseData> {
    spec.validate()?;
    if !spec.singularities.all_pos() {
        return Err(Error::InvalidArgument("Morse scan requires all orders > 0".into()));
    }
    let starts: Vec<SpherePoint> = grid
        .points()
        .iter()
        .step_by(opts.stride.max(1))
        .filter(|x| spec.singularities.nearest(x).is_none_or(|(_, d)| d > opts.exclusion_radius))
        .copied()
        .collect();
    let found: Vec<Option<SpherePoint>> = par_map(&starts, |_, s| newton_critical(spec, s, opts));

    let mut clusters: Vec<SpherePoint> = Vec::new();
    for x in found.into_iter().flatten() {
        if spec.singularities.nearest(&x).is_some_and(|(_, d)| d <= opts.exclusion_radius) {
            continue;
        }
        if clusters.iter().all(|c| geodesic_distance(c, &x) > opts.cluster_radius) {
            clusters.push(x);
        }
    }
    let mut points: Vec<CriticalPoint> = clusters.into_iter().map(|x| classify(spec, x, opts)).collect();
    points.retain(|p| p.gradient_norm < opts.tol_grad);
    points.sort_by(|a, b| {
        let (pa, pb) = (a.location.coords(), b.location.coords());
        pa.partial_cmp(&pb).unwrap()
    });

    let mut data = MorseData {
        points: Vec::new(),
        r: 0,
        s: 0,
        r_prime: 0,
        s_prime: 0,
        unbucketed_saddles: 0,
        degenerate: false,
        degenerate_reasons: Vec::new(),
        options: opts.clone(),
    };
    if points.is_empty() {
        data.degenerate = true;
        data.degenerate_reasons.push("no isolated critical points found".into());
    }
    for p in &points {
        if p.hessian_eigenvalues.iter().any(|l| l.abs() < opts.hessian_threshold) {
            data.degenerate = true;
            if data.degenerate_reasons.len() < 8 {
                data.degenerate_reasons.push(format!(
                    "Hessian eigenvalue below {:e} at {:?}",
                    opts.hessian_threshold,
                    p.location.coords()
                ));
            }
        }
        if p.laplacian_h.abs() < opts.laplacian_threshold {
            data.degenerate = true;
            if data.degenerate_reasons.len() < 8 {
                data.degenerate_reasons.push(format!("|Laplacian of h| below {:e}", opts.laplacian_threshold));
            }
        }
        match p.kind {
            CriticalKind::Maximum => data.r += 1,
            CriticalKind::Minimum => data.r_prime += 1,
            CriticalKind::Saddle if p.laplacian_h.abs() < opts.laplacian_threshold => {
                data.unbucketed_saddles += 1
            }
            CriticalKind::Saddle if p.laplacian_h < 0.0 => data.s += 1,
            CriticalKind::Saddle => data.s_prime += 1,
        }
    }
    data.points = points;
    Ok(data)
}

/// Like [`morse_analysis`] but fails with `DegenerateMorse` when the data
/// do not satisfy the nondegeneracy thresholds.
pub fn morse_scan(spec: &PotentialSpec, grid: &SphereGrid, tol_grad: f64) -> Result<MorseData> {
    let opts = MorseOptions { tol_grad, ..MorseOptions::default() };
    morse_scan_with(spec, grid, &opts)
}

pub fn morse_scan_with(spec: &PotentialSpec, grid: &SphereGrid, opts: &MorseOptions) -> Result<MorseData> {
    let data = morse_analysis(spec, grid, opts)?;
    if data.degenerate {
        return Err(Error::DegenerateMorse(data.degenerate_reasons.join("; ")));
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Laplacian conditions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionVerdict {
    SolutionAt8pi { checked_points: usize, max_margin: f64 },
    SolutionAt8kpi { k: f64, checked_points: usize, max_margin: f64 },
    ConditionFails { witness: SpherePoint, lhs: f64, rhs: f64 },
}

impl ConditionVerdict {
    pub fn holds(&self) -> bool {
        !matches!(self, ConditionVerdict::ConditionFails { .. })
    }
}

fn check_preconditions(spec: &PotentialSpec) -> Result<()> {
    if spec.singularities.m() < 2 {
        return Err(Error::InvalidArgument("condition requires m >= 2".into()));
    }
    if !spec.singularities.all_pos() {
        return Err(Error::InvalidArgument("condition requires all orders > 0".into()));
    }
    Ok(())
}

/// Δ ln K < Σαᵢ at every critical point of h.
pub fn check_cond_teo3(spec: &PotentialSpec, grid: &SphereGrid, opts: &MorseOptions) -> Result<ConditionVerdict> {
    check_preconditions(spec)?;
    let data = morse_scan_with(spec, grid, opts)?;
    let rhs = spec.singularities.alpha_sum();
    let mut max_margin = f64::NEG_INFINITY;
    for p in &data.points {
        let lhs = spec.laplacian_log_k(&p.location, opts.fd_scale);
        if lhs >= rhs {
            return Ok(ConditionVerdict::ConditionFails { witness: p.location, lhs, rhs });
        }
        max_margin = max_margin.max(lhs - rhs);
    }
    Ok(ConditionVerdict::SolutionAt8pi { checked_points: data.points.len(), max_margin })
}

/// Δ ln K < Σαᵢ + 2(1 − k) at every grid node, for k < 1 + α₁.
pub fn check_cond_teo31(spec: &PotentialSpec, k: f64, grid: &SphereGrid, fd_scale: f64) -> Result<ConditionVerdict> {
    check_preconditions(spec)?;
    let alpha1 = spec.singularities.orders().min_alpha().unwrap();
    if !(k > 0.0 && k < 1.0 + alpha1) {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in (0, 1 + alpha_1 = {})", 1.0 + alpha1)));
    }
    let rhs = spec.singularities.alpha_sum() + 2.0 * (1.0 - k);
    let lhs_all = par_map(grid.points(), |_, x| spec.laplacian_log_k(x, fd_scale));
    let mut worst: Option<(usize, f64)> = None;
    for (i, &lhs) in lhs_all.iter().enumerate() {
        if worst.is_none_or(|(_, w)| lhs > w) {
            worst = Some((i, lhs));
        }
    }
    let (i, lhs) = worst.expect("non-empty grid");
    if lhs >= rhs {
        return Ok(ConditionVerdict::ConditionFails { witness: *grid.point(i), lhs, rhs });
    }
    Ok(ConditionVerdict::SolutionAt8kpi { k, checked_points: grid.len(), max_margin: lhs - rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_grid, green};
    use std::f64::consts::PI;

    #[test]
    fn regular_unit_potential() {
        let g = build_grid(8, 16, 7).unwrap();
        let h = build_h(&PotentialSpec::default(), &g).unwrap();
        assert!(h.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_singularity_closed_form() {
        let g = build_grid(16, 32, 15).unwrap();
        let p = SpherePoint::north();
        let spec = PotentialSpec::new(KExpr::default(), SingularityConfig::from_pairs(&[(p, 1.0)]).unwrap());
        let h = build_h(&spec, &g).unwrap();
        let c = (1.0 - LN_2).exp();
        for (x, v) in g.points().iter().zip(h.values()) {
            assert!((v - (1.0 - x.dot(&p)) * c).abs() < 1e-13);
            // ln h + 4πG(·, p) is constant
            let k = v.ln() + 4.0 * PI * green(x, &p).unwrap();
            assert!((k - 0.0).abs() < 1e-12);
        }
        assert!((spec.h(&p.antipode()) - 2.0 * c).abs() < 1e-14);
    }

    #[test]
    fn behaves_like_distance_power_near_singularity() {
        let p = SpherePoint::new(0.2, 0.3, 0.9).unwrap();
        let spec = PotentialSpec::new(
            KExpr::affine(1.0, vec![(0.2, KExpr::coordinate(1))]),
            SingularityConfig::from_pairs(&[(p, 0.7)]).unwrap(),
        );
        let (e1, _) = p.tangent_frame();
        let mut vals = Vec::new();
        for k in 5..10 {
            let d = 10f64.powi(-k);
            let x = p.gnomonic_in(&e1, &[0.0; 3], d, 0.0);
            let dist = geodesic_distance(&x, &p);
            vals.push(spec.log_h(&x) - 1.4 * dist.ln());
        }
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-5, "{vals:?}");
        let limit = spec.k.ln_eval(&p) + 0.7 * (1.0 - 2.0 * LN_2);
        assert!((vals[3] - limit).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_k() {
        let g = build_grid(8, 16, 7).unwrap();
        let spec = PotentialSpec::regular(KExpr::coordinate(3));
        assert!(matches!(build_h(&spec, &g), Err(Error::NonPositiveK { .. })));
    }

    #[test]
    fn log_additivity_and_scaling() {
        let g = build_grid(12, 24, 11).unwrap();
        let sing = SingularityConfig::from_pairs(&[(SpherePoint::north(), 0.8), (SpherePoint::new(1.0, 0.0, 0.0).unwrap(), 0.3)]).unwrap();
        let k1 = KExpr::affine(2.0, vec![(0.5, KExpr::coordinate(2))]);
        let k2 = KExpr::exp(KExpr::harmonics(&[(2, 1, 0.4)]));
        let h1 = build_h(&PotentialSpec::new(k1.clone(), sing.clone()), &g).unwrap();
        for (x, v) in g.points().iter().zip(h1.values()) {
            let both = PotentialSpec::new(k1.clone(), sing.clone()).log_h(x) + k2.ln_eval(x);
            assert!((v.ln() + k2.ln_eval(x) - both).abs() < 1e-12);
        }
        let scaled = KExpr::affine(0.0, vec![(3.0, k1.clone())]);
        let h3 = build_h(&PotentialSpec::new(scaled, sing), &g).unwrap();
        for (a, b) in h3.values().iter().zip(h1.values()) {
            assert!((a - 3.0 * b).abs() < 1e-12 * a.abs());
        }
    }

    #[test]
    fn serde_round_trip_of_spec() {
        let spec = PotentialSpec::new(
            KExpr::exp(KExpr::harmonics(&[(1, 0, 0.5)])),
            SingularityConfig::antipodal(SpherePoint::north(), 0.6, 0.9).unwrap(),
        );
        let s = serde_json::to_string(&spec).unwrap();
        let back: PotentialSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        assert!(spec.singularities.antipodal_pair());
    }

    #[test]
    fn duplicate_points_rejected() {
        let p = SpherePoint::north();
        assert!(SingularityConfig::from_pairs(&[(p, 1.0), (p, 2.0)]).is_err());
        assert!(SingularityConfig::from_pairs(&[(p, -1.0)]).is_err());
    }

    #[test]
    fn eigen_2x2() {
        let (l, v) = sym2_eigen([[2.0, 1.0], [1.0, 2.0]]);
        assert!((l[0] - 1.0).abs() < 1e-14 && (l[1] - 3.0).abs() < 1e-14);
        assert!((v[0][0] + v[0][1]).abs() < 1e-14);
    }
}
