//! Axially symmetric reduction about an antipodal pair of singular points.
//!
//! Profiles are functions of s = log t, where t = |y| is the stereographic
//! radius with p₁ at the origin (projection from p₂ = −p₁). In these
//! coordinates the area element is 2π sech²(s) ds and the Dirichlet energy
//! is 2π ∫ v_s² ds.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{lbfgs, Control, LbfgsOptions, Termination};
use crate::potential::PotentialSpec;
use crate::solver::{
    default_starts, el_residual, evaluate_j, minimize_multistart, Init, SolveResult, SolveStatus, SolverOptions,
    TracePoint,
};
use crate::sphere::{ScalarField, SphereGrid, SpherePoint};

const FOUR_PI: f64 = 4.0 * PI;

/// Values on a uniform grid in s = log t, extended beyond the ends by
/// c₀ + c₁t near t = 0 and c₀ + c₁/t near t = ∞.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    s_min: f64,
    s_max: f64,
    values: Vec<f64>,
    /// Exponents (k₀, k₁) of the tails c₀ + c₁t^{k₀} and c₀ + c₁t^{−k₁}.
    #[serde(default = "unit_exponents")]
    tail_exponents: (f64, f64),
}

fn unit_exponents() -> (f64, f64) {
    (1.0, 1.0)
}

impl RadialProfile {
    pub fn new(s_min: f64, s_max: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 6 || !(s_max > s_min) {
            return Err(Error::InvalidArgument("a profile needs at least 6 nodes and s_max > s_min".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite profile value".into()));
        }
        Ok(Self { s_min, s_max, values, tail_exponents: unit_exponents() })
    }

    /// Samples f(t) on `n` log-spaced nodes in [t_min, t_max].
    pub fn from_fn_t(t_min: f64, t_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (a, b) = (t_min.ln(), t_max.ln());
        let h = (b - a) / (n - 1) as f64;
        Self::new(a, b, (0..n).map(|i| f((a + h * i as f64).exp())).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        (self.s_max - self.s_min) / (self.values.len() - 1) as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        self.s_min + self.spacing() * i as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        self.s(i).exp()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::GridMismatch);
        }
        let mut out = Self::new(self.s_min, self.s_max, values)?;
        out.tail_exponents = self.tail_exponents;
        Ok(out)
    }

    pub fn tail_exponents(&self) -> (f64, f64) {
        self.tail_exponents
    }

    /// Tail coefficients (c₀, c₁) at the lower and upper ends.
    fn tails(&self) -> ((f64, f64), (f64, f64)) {
        let n = self.values.len();
        let (k0, k1) = self.tail_exponents;
        let (a0, a1) = ((k0 * self.s(0)).exp(), (k0 * self.s(1)).exp());
        let c1 = (self.values[1] - self.values[0]) / (a1 - a0);
        let low = (self.values[0] - c1 * a0, c1);
        let (b0, b1) = ((-k1 * self.s(n - 2)).exp(), (-k1 * self.s(n - 1)).exp());
        let d1 = (self.values[n - 2] - self.values[n - 1]) / (b0 - b1);
        let high = (self.values[n - 1] - d1 * b1, d1);
        (low, high)
    }

    /// Six-point Lagrange interpolation in s.
    pub fn eval_s(&self, s: f64) -> f64 {
        let n = self.values.len();
        if s <= self.s_min {
            let ((c0, c1), _) = self.tails();
            return c0 + c1 * (self.tail_exponents.0 * s).exp();
        }
        if s >= self.s_max {
            let (_, (c0, c1)) = self.tails();
            return c0 + c1 * (-self.tail_exponents.1 * s).exp();
        }
        let h = self.spacing();
        let x = (s - self.s_min) / h;
        let i = (x.floor() as usize).min(n - 2);
        let start = i.saturating_sub(2).min(n - 6);
        let mut total = 0.0;
        for j in start..start + 6 {
            let mut w = 1.0;
            for k in start..start + 6 {
                if k != j {
                    w *= (x - k as f64) / (j as f64 - k as f64);
                }
            }
            total += w * self.values[j];
        }
        total
    }

    /// Interpolates onto `n` uniform nodes in [s_min, s_max].
    pub fn resample(&self, s_min: f64, s_max: f64, n: usize) -> Result<Self> {
        let h = (s_max - s_min) / (n - 1) as f64;
        let mut out = Self::new(s_min, s_max, (0..n).map(|i| self.eval_s(s_min + h * i as f64)).collect())?;
        out.tail_exponents = self.tail_exponents;
        Ok(out)
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    pub fn eval_t(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.tails().0 .0
        } else {
            self.eval_s(t.ln())
        }
    }

    /// Value at x ∈ S² for the axis through `p1`.
    pub fn eval_at(&self, x: &SpherePoint, p1: &SpherePoint) -> f64 {
        let a = x.one_minus_dot(p1);
        let b = 2.0 - a;
        if a <= 0.0 {
            return self.tails().0 .0;
        }
        if b <= 0.0 {
            return self.tails().1 .0;
        }
        self.eval_s(0.5 * (a / b).ln())
    }

    pub fn to_field(&self, grid: &Arc<SphereGrid>, p1: &SpherePoint) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval_at(x, p1))
    }

    /// 2π ∫ v_s² ds with a fourth-order midpoint stencil, tails included.
    pub fn dirichlet_energy(&self) -> f64 {
        let d = midpoint_derivatives(&self.values, self.spacing());
        let ((_, a), (_, b)) = self.tails();
        let (k0, k1) = self.tail_exponents;
        // 2π ∫ (c₁ k e^{∓ks})² ds over each tail
        let low = PI * k0 * a * a * (2.0 * k0 * self.s_min).exp();
        let high = PI * k1 * b * b * (-2.0 * k1 * self.s_max).exp();
        2.0 * PI * self.spacing() * d.iter().map(|x| x * x).sum::<f64>() + low + high
    }

    /// CSV with columns t, value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([self.t(i).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Derivatives at the midpoints s_{i+½}, fourth order in the interior.
fn midpoint_derivatives(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n - 1)
        .map(|m| {
            if m == 0 || m + 2 >= n {
                (v[m + 1] - v[m]) / h
            } else {
                (v[m - 1] - 27.0 * v[m] + 27.0 * v[m + 1] - v[m + 2]) / (24.0 * h)
            }
        })
        .collect()
}

/// Gradient of 2πh Σ d_m² with respect to the nodal values.
fn dirichlet_gradient(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let d = midpoint_derivatives(v, h);
    let mut g = vec![0.0; n];
    let c = 2.0 * PI * h * 2.0;
    for (m, dm) in d.iter().enumerate() {
        if m == 0 || m + 2 >= n {
            g[m] -= c * dm / h;
            g[m + 1] += c * dm / h;
        } else {
            let k = c * dm / (24.0 * h);
            g[m - 1] += k;
            g[m] -= 27.0 * k;
            g[m + 1] += 27.0 * k;
            g[m + 2] -= k;
        }
    }
    g
}

/// v_α(t) = v(t^{1/(1+α)}). On the log grid this is the map s ↦ (1+α)s,
/// so the nodal values are kept and the grid and tails are rescaled.
pub fn alpha_stretch(v: &RadialProfile, alpha: f64) -> Result<RadialProfile> {
    if !(alpha > -1.0) {
        return Err(Error::InvalidOrder(alpha));
    }
    let k = 1.0 + alpha;
    let mut out = RadialProfile::new(v.s_min * k, v.s_max * k, v.values.clone())?;
    out.tail_exponents = (v.tail_exponents.0 / k, v.tail_exponents.1 / k);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialOptions {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes: usize,
    pub max_iter: usize,
    /// Bound on the preconditioned update sup-norm.
    pub tol_step: f64,
    /// Bound on the lifted residual sup-norm.
    pub tol_res: f64,
    /// Band limit of the sphere grid used for lifting.
    pub l_max: usize,
    pub memory: usize,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { t_min: 1e-4, t_max: 1e4, nodes: 2048, max_iter: 5000, tol_step: 1e-9, tol_res: 1e-5, l_max: 63, memory: 20 }
    }
}

/// J_ρ^h restricted to functions of x·p₁.
#[derive(Clone, Debug)]
pub struct RadialFunctional {
    pub rho: f64,
    pub p1: SpherePoint,
    s_min: f64,
    s_max: f64,
    /// Area weights in steradians; they sum to 4π.
    weights: Vec<f64>,
    log_h: Vec<f64>,
}

impl RadialFunctional {
    /// Requires K symmetric about the axis of the antipodal pair.
    pub fn new(rho: f64, spec: &PotentialSpec, opts: &RadialOptions) -> Result<Self> {
        let sing = spec.singularities.items();
        if sing.len() != 2 || !spec.singularities.antipodal_pair() {
            return Err(Error::InvalidArgument("radial reduction needs two antipodal singular points".into()));
        }
        let p1 = if sing[0].alpha <= sing[1].alpha { sing[0].point } else { sing[1].point };
        if !spec.k.is_axisymmetric(&p1) {
            return Err(Error::NotAxisymmetric("K is not invariant under rotations about the axis".into()));
        }
        if !(opts.nodes >= 6 && opts.t_min > 0.0 && opts.t_max > opts.t_min) {
            return Err(Error::InvalidArgument("invalid radial grid".into()));
        }
        let (a, b) = (opts.t_min.ln(), opts.t_max.ln());
        let n = opts.nodes;
        let h = (b - a) / (n - 1) as f64;
        let s: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
        let mut weights: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(i, &si)| {
                let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                2.0 * PI * h * end / si.cosh().powi(2)
            })
            .collect();
        weights[0] += 2.0 * PI * (1.0 + a.tanh());
        weights[n - 1] += 2.0 * PI * (1.0 - b.tanh());
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w *= FOUR_PI / total);

        let (e1, _) = p1.tangent_frame();
        let log_h = s
            .iter()
            .map(|&si| {
                // point at polar angle θ from p1 with tan(θ/2) = e^s
                let theta = 2.0 * si.exp().atan();
                let p = p1.coords();
                let x = SpherePoint::new(
                    theta.cos() * p[0] + theta.sin() * e1[0],
                    theta.cos() * p[1] + theta.sin() * e1[1],
                    theta.cos() * p[2] + theta.sin() * e1[2],
                )
                .expect("unit combination");
                let (a1, a2) = if sing[0].point == p1 { (sing[0].alpha, sing[1].alpha) } else { (sing[1].alpha, sing[0].alpha) };
                // ln h = ln K + (α₁+α₂) + 2α₁ s − (α₁+α₂) ln(1 + e^{2s})
                let l1p = if si > 0.0 { 2.0 * si + (-2.0 * si).exp().ln_1p() } else { (2.0 * si).exp().ln_1p() };
                spec.k.ln_eval(&x) + (a1 + a2) + 2.0 * a1 * si - (a1 + a2) * l1p
            })
            .collect();
        Ok(Self { rho, p1, s_min: a, s_max: b, weights, log_h })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn profile(&self, values: Vec<f64>) -> Result<RadialProfile> {
        RadialProfile::new(self.s_min, self.s_max, values)
    }

    /// Samples a function of t on this functional's nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> RadialProfile {
        let h = (self.s_max - self.s_min) / (self.nodes() - 1) as f64;
        let values = (0..self.nodes()).map(|i| f((self.s_min + h * i as f64).exp())).collect();
        RadialProfile::new(self.s_min, self.s_max, values).expect("finite samples")
    }

    fn check(&self, v: &RadialProfile) -> Result<()> {
        if v.len() != self.nodes() || v.s_min != self.s_min || v.s_max != self.s_max {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let h = (self.s_max - self.s_min) / (v.len() - 1) as f64;
        let d = midpoint_derivatives(v, h);
        let dirichlet = 2.0 * PI * h * d.iter().map(|x| x * x).sum::<f64>();
        let shift = self.log_h.iter().zip(v).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.log_h.iter().zip(v).map(|(a, b)| (a + b - shift).exp()).collect();
        let sum: f64 = e.iter().zip(&self.weights).map(|(a, w)| a * w).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::NonIntegrable(sum));
        }
        let mean_term: f64 = v.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() * self.rho / FOUR_PI;
        let j = 0.5 * dirichlet + mean_term - self.rho * (shift + sum.ln() - FOUR_PI.ln());
        let mut g = dirichlet_gradient(v, h);
        for i in 0..v.len() {
            g[i] = 0.5 * g[i] + self.rho * self.weights[i] * (1.0 / FOUR_PI - e[i] / sum);
        }
        Ok((j, g))
    }

    pub fn value(&self, v: &RadialProfile) -> Result<f64> {
        self.check(v)?;
        Ok(self.value_and_gradient(v.values())?.0)
    }

    /// (K₃ + M)⁻¹ g with K₃ the three-point stiffness and M the area weights.
    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        let h = (self.s_max - self.s_min) / (n - 1) as f64;
        let k = 2.0 * PI / h;
        let mut diag: Vec<f64> = (0..n)
            .map(|i| {
                let edges = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
                k * edges + self.weights[i]
            })
            .collect();
        let off = -k;
        let mut rhs = g.to_vec();
        for i in 1..n {
            let m = off / diag[i - 1];
            diag[i] -= m * off;
            rhs[i] -= m * rhs[i - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (rhs[i] - off * x[i + 1]) / diag[i];
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct RadialSolveResult {
    pub profile: RadialProfile,
    /// Value of the 1-D functional.
    pub j_radial: f64,
    /// Lifted field with J and residual evaluated on the sphere grid.
    pub result: SolveResult,
    pub axis: SpherePoint,
}

/// Minimizes the radial functional and lifts the minimizer to the sphere.
pub fn minimize_radial(rho: f64, spec: &PotentialSpec, opts: &RadialOptions) -> Result<RadialSolveResult> {
    let grid = SphereGrid::for_band_limit(opts.l_max)?;
    minimize_radial_on(rho, spec, opts, &grid, None)
}

/// As [`minimize_radial`] on a given grid and optional starting profile.
pub fn minimize_radial_on(
    rho: f64,
    spec: &PotentialSpec,
    opts: &RadialOptions,
    grid: &Arc<SphereGrid>,
    init: Option<&RadialProfile>,
) -> Result<RadialSolveResult> {
    if spec.singularities.m() != 2 || !spec.singularities.all_pos() {
        return Err(Error::InvalidArgument("radial solver needs m = 2 with positive orders".into()));
    }
    let alpha1 = spec.singularities.orders().min_alpha().unwrap();
    if !(rho > 0.0 && rho < 8.0 * PI * (1.0 + alpha1)) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 8π(1+α₁)) = (0, {})", 8.0 * PI * (1.0 + alpha1))));
    }
    let f = RadialFunctional::new(rho, spec, opts)?;
    let x0 = match init {
        Some(p) => {
            f.check(p)?;
            p.values().to_vec()
        }
        None => vec![0.0; f.nodes()],
    };
    let lopts = LbfgsOptions { memory: opts.memory, max_iter: opts.max_iter, ..LbfgsOptions::default() };
    let mut converged = false;
    let mut trace = Vec::new();
    let out = lbfgs(
        x0,
        |x: &[f64]| f.value_and_gradient(x),
        |g: &[f64]| f.precondition(g),
        &lopts,
        |iter, _x: &[f64], j, g: &[f64]| {
            let step = f.precondition(g).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            trace.push(TracePoint { iteration: iter, j, max_u: f64::NAN, residual: step, peak_mass: f64::NAN });
            if step <= opts.tol_step {
                converged = true;
                return Ok(Control::Stop);
            }
            Ok(Control::Continue)
        },
    )?;
    if out.termination == Termination::Stalled {
        converged = true;
    }
    if !converged && out.termination == Termination::MaxIter {
        let step = trace.last().map_or(f64::NAN, |t| t.residual);
        return Err(Error::MaxIter { iterations: out.iterations, residual: step });
    }

    let weights = f.weights();
    let mean = out.x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / FOUR_PI;
    let profile = f.profile(out.x.iter().map(|v| v - mean).collect())?;
    let u = profile.to_field(grid, &f.p1);
    let u = u.add_constant(-u.mean());
    let h = crate::potential::build_h(spec, grid)?;
    let j = evaluate_j(&u, rho, &h)?;
    let residual = el_residual(&u, rho, &h)?.sup_norm();
    let (node, max_u) = u.argmax();
    let status = if residual <= opts.tol_res { SolveStatus::Converged } else { SolveStatus::MaxIter };
    Ok(RadialSolveResult {
        j_radial: out.f,
        axis: f.p1,
        result: SolveResult {
            argmax: *grid.point(node),
            u,
            rho,
            j,
            residual,
            iterations: out.iterations,
            status,
            max_u,
            trace,
        },
        profile,
    })
}

/// 2 log((1+|y|²)^{1+α} / (1 + e^λ |y|^{2(1+α)})) + c with y the
/// stereographic image from p₁.
pub fn explicit_family(lambda: f64, c: f64, alpha: f64, p1: &SpherePoint, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
    if !(alpha > -1.0) {
        return Err(Error::InvalidOrder(alpha));
    }
    Ok(ScalarField::from_fn(grid, |x| explicit_value(lambda, c, alpha, x.one_minus_dot(p1))))
}

/// With a = 1 − x·p₁, b = 1 + x·p₁ one has |y|² = b/a and the value is
/// 2((1+α) log 2 − log(a^{1+α} + e^λ b^{1+α})) + c.
fn explicit_value(lambda: f64, c: f64, alpha: f64, a: f64) -> f64 {
    let b = 2.0 - a;
    let k = 1.0 + alpha;
    2.0 * (k * 2f64.ln() - (a.powf(k) + lambda.exp() * b.powf(k)).ln()) + c
}

/// The same family as a radial profile in the coordinates of a functional
/// whose origin t = 0 sits at p₁.
pub fn explicit_profile(lambda: f64, c: f64, alpha: f64, functional: &RadialFunctional) -> RadialProfile {
    // a = 2t²/(1+t²)
    functional.sample(|t| explicit_value(lambda, c, alpha, 2.0 * t * t / (1.0 + t * t)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MultiplicityVerdict {
    TwoSolutions,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub rho: f64,
    pub j_full: f64,
    pub j_radial: f64,
    /// L² norm of the m ≠ 0 part of the full minimizer about the axis.
    pub asymmetry: f64,
    pub full_status: SolveStatus,
    pub radial_residual: f64,
    pub verdict: MultiplicityVerdict,
    pub asymmetry_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub solver: SolverOptions,
    pub radial: RadialOptions,
    pub starts: usize,
    pub noise_amplitude: f64,
    pub asymmetry_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            radial: RadialOptions::default(),
            starts: 4,
            noise_amplitude: 0.5,
            asymmetry_tol: 0.1,
        }
    }
}

/// Spectral mass with m ≠ 0 after rotating `axis` to the north pole.
pub fn asymmetry_about(u: &ScalarField, axis: &SpherePoint) -> f64 {
    let grid = u.grid();
    if axis.z().abs() > 1.0 - 1e-15 {
        return u.analysis().non_axisymmetric_norm();
    }
    let c = u.analysis();
    let rotated = ScalarField::from_fn(grid, |x| c.evaluate_at(&axis.rotate_from_north(x)));
    rotated.analysis().non_axisymmetric_norm()
}

/// Compares the full-space and radial minima below the first critical value.
pub fn multiplicity_probe(rho: f64, spec: &PotentialSpec, opts: &ProbeOptions) -> Result<MultiplicityReport> {
    let grid = SphereGrid::for_band_limit(opts.radial.l_max)?;
    let radial = minimize_radial_on(rho, spec, &opts.radial, &grid, None)?;
    let h = crate::potential::build_h(spec, &grid)?;
    let mut starts = default_starts(opts.starts.max(1), opts.solver.seed, opts.noise_amplitude);
    starts.push(Init::Field(radial.result.u.clone()));
    let mut best: Option<SolveResult> = None;
    for r in minimize_multistart(rho, &h, &starts, &opts.solver) {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.j < b.j) {
            best = Some(r);
        }
    }
    let full = best.expect("at least one start");
    let asymmetry = asymmetry_about(&full.u, &radial.axis);
    let verdict = if full.j < radial.result.j && asymmetry > opts.asymmetry_tol {
        MultiplicityVerdict::TwoSolutions
    } else {
        MultiplicityVerdict::Inconclusive
    };
    Ok(MultiplicityReport {
        rho,
        j_full: full.j,
        j_radial: radial.result.j,
        asymmetry,
        full_status: full.status,
        radial_residual: radial.result.residual,
        verdict,
        asymmetry_tol: opts.asymmetry_tol,
    })
}
