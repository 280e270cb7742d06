//! The functional J_ρ^h on S², its Euler–Lagrange residual and a
//! preconditioned descent solver on mean-zero fields.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{lbfgs, Control, LbfgsOptions, Termination};
use crate::series::OrderVector;
use crate::sphere::{ScalarField, SpectralCoeffs, SphereGrid, SpherePoint};

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Initial trial step of the line search.
    pub step: f64,
    /// Backtracking factor of the Armijo search.
    pub backtrack: f64,
    pub max_iter: usize,
    /// Bound on the sup-norm of the residual.
    pub tol_res: f64,
    pub mean_zero: bool,
    pub seed: u64,
    /// max u above which the run is declared to blow up.
    pub blowup_ceiling: f64,
    /// Number of stored L-BFGS pairs.
    pub memory: usize,
    /// Restrict iterates to fields invariant under rotation about the z axis.
    pub axisymmetric: bool,
    /// Also report blow-up once the density is no longer resolved by the grid.
    pub resolution_guard: bool,
    /// Guard radius in units of the ring spacing π/(L+1).
    pub guard_radius_cells: f64,
    /// Fraction of the density mass inside the guard radius that trips the guard.
    pub guard_mass: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            backtrack: 0.5,
            max_iter: 2000,
            tol_res: 1e-6,
            mean_zero: true,
            seed: 0,
            blowup_ceiling: 30.0,
            memory: 12,
            axisymmetric: false,
            resolution_guard: true,
            guard_radius_cells: 2.0,
            guard_mass: 0.5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_res > 0.0) {
            return Err(Error::InvalidArgument("tol_res must be positive".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidArgument("backtrack factor must lie in (0, 1)".into()));
        }
        if self.memory == 0 {
            return Err(Error::InvalidArgument("memory must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    BlowupSuspected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub j: f64,
    pub max_u: f64,
    pub residual: f64,
    /// Density mass within the guard radius of the maximum of u.
    pub peak_mass: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: ScalarField,
    pub rho: f64,
    pub j: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub max_u: f64,
    pub argmax: SpherePoint,
    pub trace: Vec<TracePoint>,
}

/// Serializable summary of a [`SolveResult`] without the field values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub rho: f64,
    pub j: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub max_u: f64,
    pub argmax: SpherePoint,
    pub mean_u: f64,
    pub l_max: usize,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            rho: self.rho,
            j: self.j,
            residual: self.residual,
            iterations: self.iterations,
            status: self.status,
            max_u: self.max_u,
            argmax: self.argmax,
            mean_u: self.u.mean(),
            l_max: self.u.grid().l_max(),
        }
    }
}

/// Starting point of a descent run.
#[derive(Clone, Debug)]
pub enum Init {
    Zero,
    Field(ScalarField),
    /// Seeded random coefficients for 1 ≤ l ≤ `l_max` with the given amplitude.
    Noise { l_max: usize, amplitude: f64, seed: u64 },
}

impl Init {
    fn coefficients(&self, grid: &Arc<SphereGrid>) -> Result<SpectralCoeffs> {
        match self {
            Init::Zero => Ok(SpectralCoeffs::zeros(grid.l_max())),
            Init::Field(f) => {
                if !Arc::ptr_eq(f.grid(), grid) && !same_layout(f.grid(), grid) {
                    return Err(Error::GridMismatch);
                }
                Ok(f.analysis())
            }
            Init::Noise { l_max, amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut c = SpectralCoeffs::zeros(grid.l_max());
                for l in 1..=(*l_max).min(grid.l_max()) {
                    for m in -(l as i64)..=l as i64 {
                        c.set(l, m, amplitude * rng.gen_range(-1.0..1.0));
                    }
                }
                Ok(c)
            }
        }
    }
}

fn same_layout(a: &SphereGrid, b: &SphereGrid) -> bool {
    a.n_theta() == b.n_theta() && a.n_phi() == b.n_phi() && a.l_max() == b.l_max()
}

fn check_pair(u: &ScalarField, h: &ScalarField) -> Result<()> {
    if u.same_grid(h) || same_layout(u.grid(), h.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// ln ∫ h e^u dv by a max-shifted sum; `log_h` may contain −∞.
fn log_integral(grid: &SphereGrid, log_h: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut shift = f64::NEG_INFINITY;
    for (a, b) in log_h.iter().zip(u) {
        shift = shift.max(a + b);
    }
    if !shift.is_finite() {
        return Err(Error::NonIntegrable(0.0));
    }
    let scaled: Vec<f64> = log_h.iter().zip(u).map(|(a, b)| (a + b - shift).exp()).collect();
    let s = grid.integrate(&scaled);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonIntegrable(s));
    }
    Ok((shift + s.ln(), scaled.into_iter().map(|v| v / s).collect()))
}

fn log_of(h: &ScalarField) -> Result<Vec<f64>> {
    h.values()
        .iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v.ln())
            } else {
                Err(Error::InvalidArgument(format!("h must be nonnegative, found {v}")))
            }
        })
        .collect()
}

/// State of J at one iterate, in coefficient form.
struct Eval {
    j: f64,
    q: Vec<f64>,
    /// Galerkin residual coefficients (= gradient of J in coefficient space).
    grad: SpectralCoeffs,
    u_nodal: Vec<f64>,
}

struct Problem {
    grid: Arc<SphereGrid>,
    rho: f64,
    log_h: Vec<f64>,
}

impl Problem {
    fn new(rho: f64, h: &ScalarField) -> Result<Self> {
        Ok(Self { grid: h.grid().clone(), rho, log_h: log_of(h)? })
    }

    fn j_nodal(&self, coeffs: &SpectralCoeffs, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (log_int, q) = log_integral(&self.grid, &self.log_h, u)?;
        let mean_term = self.rho / FOUR_PI * self.grid.integrate(u);
        let j = 0.5 * coeffs.dirichlet_energy() + mean_term - self.rho * (log_int - FOUR_PI.ln());
        Ok((j, q))
    }

    fn eval(&self, coeffs: &SpectralCoeffs) -> Result<Eval> {
        let u = self.grid.synthesis(coeffs);
        let (j, q) = self.j_nodal(coeffs, &u)?;
        let grad = self.residual_coeffs(coeffs, &q);
        Ok(Eval { j, q, grad, u_nodal: u })
    }

    /// l(l+1)c_lm − ρ(q_lm − δ_{l0}/√4π), with q = h e^u / ∫ h e^u.
    fn residual_coeffs(&self, coeffs: &SpectralCoeffs, q: &[f64]) -> SpectralCoeffs {
        let qc = self.grid.analysis(q);
        let mut r = coeffs.scale_by_degree(|l| (l * (l + 1)) as f64);
        for (ri, qi) in r.as_mut_slice().iter_mut().zip(qc.as_slice()) {
            *ri -= self.rho * qi;
        }
        let r00 = r.get(0, 0) + self.rho / FOUR_PI.sqrt();
        r.set(0, 0, r00);
        r
    }
}

/// J_ρ^h(u) = ½∫|∇u|² + (ρ/4π)∫u − ρ log((1/4π)∫h e^u), with the
/// Dirichlet energy taken from the spectral coefficients of u.
pub fn evaluate_j(u: &ScalarField, rho: f64, h: &ScalarField) -> Result<f64> {
    check_pair(u, h)?;
    let p = Problem::new(rho, h)?;
    let (j, _) = p.j_nodal(&u.analysis(), u.values())?;
    Ok(j)
}

/// Band-limited projection of −Δu − ρ(h e^u/∫h e^u − 1/4π).
pub fn el_residual(u: &ScalarField, rho: f64, h: &ScalarField) -> Result<ScalarField> {
    check_pair(u, h)?;
    let p = Problem::new(rho, h)?;
    let (_, q) = log_integral(&p.grid, &p.log_h, u.values())?;
    let r = p.residual_coeffs(&u.analysis(), &q);
    Ok(ScalarField::from_coeffs(u.grid(), &r))
}

/// T_ρ(u) = ρ Δ⁻¹(h e^u/∫h e^u − 1/4π); T_ρ(u) + u = 0 exactly when
/// the residual vanishes.
pub fn fixed_point_map(u: &ScalarField, rho: f64, h: &ScalarField) -> Result<ScalarField> {
    check_pair(u, h)?;
    let p = Problem::new(rho, h)?;
    let (_, q) = log_integral(&p.grid, &p.log_h, u.values())?;
    let t = p
        .grid
        .analysis(&q)
        .scale_by_degree(|l| if l == 0 { 0.0 } else { -rho / (l * (l + 1)) as f64 });
    Ok(ScalarField::from_coeffs(u.grid(), &t))
}

/// Unit-area probability density h e^u / ∫ h e^u at the nodes.
pub fn normalized_density(u: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
    check_pair(u, h)?;
    let (_, q) = log_integral(u.grid(), &log_of(h)?, u.values())?;
    ScalarField::new(u.grid().clone(), q)
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
}

/// ∫_{B(center, radius)} q dv.
pub(crate) fn mass_near(grid: &SphereGrid, q: &[f64], center: &SpherePoint, radius: f64) -> f64 {
    let cos_r = radius.cos();
    grid.points()
        .iter()
        .zip(q)
        .enumerate()
        .filter(|(_, (x, _))| x.dot(center) >= cos_r)
        .map(|(i, (_, v))| grid.weight(i) * v)
        .sum()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Descent for J_ρ^h on band-limited fields, preconditioned by Δ⁻¹.
///
/// Exhausting `max_iter` is an error; a stalled line search above the
/// tolerance is reported with status `MaxIter`.
pub fn minimize(rho: f64, h: &ScalarField, init: &Init, opts: &SolverOptions) -> Result<SolveResult> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    opts.validate()?;
    let problem = Problem::new(rho, h)?;
    let grid = problem.grid.clone();
    let l_max = grid.l_max();
    let mut c0 = init.coefficients(&grid)?;
    if opts.mean_zero {
        c0.set(0, 0, 0.0);
    }
    let keep = |l: usize, m: i64| l > 0 && (!opts.axisymmetric || m == 0);
    let mask: Vec<bool> = SpectralCoeffs::zeros(l_max).iter().map(|(l, m, _)| keep(l, m)).collect();
    let degree: Vec<f64> = SpectralCoeffs::zeros(l_max).iter().map(|(l, _, _)| (l * (l + 1)) as f64).collect();
    for (v, &k) in c0.as_mut_slice().iter_mut().zip(&mask) {
        if !k && opts.axisymmetric {
            *v = 0.0;
        }
    }
    let c00 = c0.get(0, 0);

    let guard_radius = opts.guard_radius_cells * PI / (l_max + 1) as f64;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut last: Option<(f64, f64, usize)> = None;
    let to_coeffs = |x: &[f64]| {
        let mut c = SpectralCoeffs::from_vec(l_max, x.to_vec()).expect("packed length");
        c.set(0, 0, c00);
        c
    };

    let lopts = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        initial_step: opts.step,
        backtrack: opts.backtrack,
        ..LbfgsOptions::default()
    };
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let e = problem.eval(&to_coeffs(x))?;
        let g = e.grad.as_slice().iter().zip(&mask).map(|(g, &k)| if k { *g } else { 0.0 }).collect();
        Ok((e.j, g))
    };
    let precond = |g: &[f64]| -> Vec<f64> {
        g.iter().zip(&degree).zip(&mask).map(|((v, d), &k)| if k { v / d } else { 0.0 }).collect()
    };
    let monitor = |iter: usize, x: &[f64], j: f64, _g: &[f64]| -> Result<Control> {
        let c = to_coeffs(x);
        let e = problem.eval(&c)?;
        let residual = sup(&grid.synthesis(&e.grad));
        let (node, max_u) = argmax(&e.u_nodal);
        let peak_mass = mass_near(&grid, &e.q, grid.point(node), guard_radius);
        trace.push(TracePoint { iteration: iter, j, max_u, residual, peak_mass });
        last = Some((residual, max_u, iter));
        if residual <= opts.tol_res {
            status = SolveStatus::Converged;
            return Ok(Control::Stop);
        }
        if max_u > opts.blowup_ceiling || (opts.resolution_guard && peak_mass > opts.guard_mass) {
            status = SolveStatus::BlowupSuspected;
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    };
    let out = lbfgs(c0.as_slice().to_vec(), objective, precond, &lopts, monitor)?;

    if matches!(out.termination, Termination::LineSearchFailed | Termination::Stalled) && status == SolveStatus::MaxIter {
        // stalled at round-off level: accept when the residual is still within a
        // factor of ten of the target, otherwise report the stall as MaxIter
        if let Some((res, _, _)) = last {
            if res <= 10.0 * opts.tol_res {
                status = SolveStatus::Converged;
            }
        }
    }
    let coeffs = to_coeffs(&out.x);
    let e = problem.eval(&coeffs)?;
    let u = ScalarField::new(grid.clone(), e.u_nodal)?;
    let residual = sup(&grid.synthesis(&e.grad));
    let (node, max_u) = u.argmax();
    if status == SolveStatus::MaxIter && out.termination == Termination::MaxIter {
        return Err(Error::MaxIter { iterations: out.iterations, residual });
    }
    Ok(SolveResult {
        argmax: *grid.point(node),
        u,
        rho,
        j: e.j,
        residual,
        iterations: out.iterations,
        status,
        max_u,
        trace,
    })
}

/// Runs [`minimize`] from each start and returns every outcome in order.
pub fn minimize_multistart(
    rho: f64,
    h: &ScalarField,
    starts: &[Init],
    opts: &SolverOptions,
) -> Vec<Result<SolveResult>> {
    crate::potential::par_map(starts, |_, s| minimize(rho, h, s, opts))
}

/// Seeded low-mode starts plus the zero field.
pub fn default_starts(count: usize, seed: u64, amplitude: f64) -> Vec<Init> {
    let mut starts = vec![Init::Zero];
    for k in 1..count {
        starts.push(Init::Noise { l_max: 4, amplitude, seed: seed.wrapping_add(k as u64) });
    }
    starts
}

/// u_t = 2 log(t(1+|y|²)/(1+t²|y|²)) with y the stereographic image from
/// the antipode of `pole`, so that e^{u_t} concentrates at `pole`.
pub fn dilation_family(t: f64, pole: &SpherePoint, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    Ok(ScalarField::from_fn(grid, |x| dilation_value(t, pole, x)))
}

pub(crate) fn dilation_value(t: f64, pole: &SpherePoint, x: &SpherePoint) -> f64 {
    // 1 + |y|² = 2/b and 1 + t²|y|² = (b + t² a)/b with a = 1 − x·p, b = 1 + x·p
    let a = x.one_minus_dot(pole);
    let b = 2.0 - a;
    2.0 * (2.0 * t / (b + t * t * a)).ln()
}

/// ᾱ = min(0, min αᵢ).
pub fn alpha_bar(orders: &OrderVector) -> f64 {
    orders.min_alpha().map_or(0.0, |a| a.min(0.0))
}

/// ∫|∇u|²/(16π(1+ᾱ)) + C − log((1/4π)∫h e^{u−ū}), ū the mean of u.
pub fn troyanov_gap(u: &ScalarField, h: &ScalarField, orders: &OrderVector, c: f64) -> Result<f64> {
    check_pair(u, h)?;
    let centered = u.mean_zero();
    let (log_int, _) = log_integral(u.grid(), &log_of(h)?, centered.values())?;
    let dirichlet = u.analysis().dirichlet_energy();
    Ok(dirichlet / (16.0 * PI * (1.0 + alpha_bar(orders))) + c - (log_int - FOUR_PI.ln()))
}
