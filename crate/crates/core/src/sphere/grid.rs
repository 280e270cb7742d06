use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::harmonics::{lm_index, normalized_legendre, real_harmonics_at, tri_index};
use super::point::SpherePoint;
use super::quadrature::gauss_legendre;
use crate::error::{Error, Result};

/// Gauss–Legendre × uniform-longitude grid with a spherical-harmonic
/// transform plan. Immutable once built; share it through `Arc`.
pub struct SphereGrid {
    n_theta: usize,
    n_phi: usize,
    l_max: usize,
    mu: Vec<f64>,
    gl_weights: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    points: Vec<SpherePoint>,
    /// n_theta rows of packed P̄_l^m(μ_a).
    legendre: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("n_theta", &self.n_theta)
            .field("n_phi", &self.n_phi)
            .field("l_max", &self.l_max)
            .finish()
    }
}

/// Builds a grid with `n_theta` Gauss–Legendre latitudes, `n_phi`
/// longitudes and band limit `l_max`.
pub fn build_grid(n_theta: usize, n_phi: usize, l_max: usize) -> Result<Arc<SphereGrid>> {
    SphereGrid::new(n_theta, n_phi, l_max).map(Arc::new)
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize, l_max: usize) -> Result<Self> {
        if n_theta < l_max + 1 {
            return Err(Error::Undersampled(format!("n_theta = {n_theta} < L_max + 1 = {}", l_max + 1)));
        }
        if n_phi < 2 * l_max + 1 {
            return Err(Error::Undersampled(format!("n_phi = {n_phi} < 2 L_max + 1 = {}", 2 * l_max + 1)));
        }
        let (mu, gl_weights) = gauss_legendre(n_theta);
        let theta: Vec<f64> = mu.iter().map(|m| m.acos()).collect();
        let phi: Vec<f64> = (0..n_phi).map(|b| 2.0 * PI * b as f64 / n_phi as f64).collect();
        let mut points = Vec::with_capacity(n_theta * n_phi);
        for &t in &theta {
            for &p in &phi {
                points.push(SpherePoint::from_angles(t, p));
            }
        }
        let ntri = tri_index(l_max, l_max) + 1;
        let mut legendre = Vec::with_capacity(n_theta * ntri);
        for &m in &mu {
            legendre.extend(normalized_legendre(l_max, m));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_phi);
        let inv = planner.plan_fft_inverse(n_phi);
        Ok(Self { n_theta, n_phi, l_max, mu, gl_weights, theta, phi, points, legendre, fwd, inv })
    }

    /// Grid with the minimal sampling for band limit `l_max`:
    /// n_theta = L+1, n_phi = 2L+2.
    pub fn for_band_limit(l_max: usize) -> Result<Arc<Self>> {
        build_grid(l_max + 1, 2 * l_max + 2, l_max)
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_coeffs(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, node: usize) -> &SpherePoint {
        &self.points[node]
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Quadrature weight of node (a, b) in steradians.
    pub fn weight(&self, node: usize) -> f64 {
        self.gl_weights[node / self.n_phi] * 2.0 * PI / self.n_phi as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Quadrature ∫ f dv of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut total = 0.0;
        for (a, row) in values.chunks_exact(self.n_phi).enumerate() {
            total += self.gl_weights[a] * row.iter().sum::<f64>();
        }
        total * dphi
    }

    /// Nearest-ring spacing in radians, a rough resolution figure.
    pub fn resolution(&self) -> f64 {
        PI / self.n_theta as f64
    }

    fn legendre_row(&self, a: usize) -> &[f64] {
        let ntri = tri_index(self.l_max, self.l_max) + 1;
        &self.legendre[a * ntri..(a + 1) * ntri]
    }

    /// Real spherical-harmonic coefficients of nodal values (quadrature).
    pub fn analysis(&self, values: &[f64]) -> SpectralCoeffs {
        assert_eq!(values.len(), self.len());
        let l_max = self.l_max;
        let mut c = vec![0.0; self.n_coeffs()];
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_phi];
        for a in 0..self.n_theta {
            let row = &values[a * self.n_phi..(a + 1) * self.n_phi];
            for (z, &v) in buf.iter_mut().zip(row) {
                *z = Complex::new(v, 0.0);
            }
            self.fwd.process(&mut buf);
            let w = self.gl_weights[a] * dphi;
            let p = self.legendre_row(a);
            for m in 0..=l_max {
                let cos_part = buf[m].re * w;
                let sin_part = -buf[m].im * w;
                if m == 0 {
                    for l in 0..=l_max {
                        c[lm_index(l, 0)] += p[tri_index(l, 0)] * cos_part;
                    }
                } else {
                    let (cp, sp) = (SQRT_2 * cos_part, SQRT_2 * sin_part);
                    for l in m..=l_max {
                        let pl = p[tri_index(l, m)];
                        c[lm_index(l, m as i64)] += pl * cp;
                        c[lm_index(l, -(m as i64))] += pl * sp;
                    }
                }
            }
        }
        SpectralCoeffs { l_max, data: c }
    }

    /// Nodal values of a band-limited expansion.
    pub fn synthesis(&self, coeffs: &SpectralCoeffs) -> Vec<f64> {
        assert_eq!(coeffs.l_max, self.l_max, "coefficient band limit must match the grid");
        let l_max = self.l_max;
        let mut out = vec![0.0; self.len()];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_phi];
        for a in 0..self.n_theta {
            let p = self.legendre_row(a);
            buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
            for m in 0..=l_max {
                let mut g = 0.0;
                let mut h = 0.0;
                if m == 0 {
                    for l in 0..=l_max {
                        g += coeffs.data[lm_index(l, 0)] * p[tri_index(l, 0)];
                    }
                    buf[0] = Complex::new(g, 0.0);
                } else {
                    for l in m..=l_max {
                        let pl = p[tri_index(l, m)];
                        g += coeffs.data[lm_index(l, m as i64)] * pl;
                        h += coeffs.data[lm_index(l, -(m as i64))] * pl;
                    }
                    buf[m] = Complex::new(SQRT_2 * g, -SQRT_2 * h);
                }
            }
            self.inv.process(&mut buf);
            for (o, z) in out[a * self.n_phi..(a + 1) * self.n_phi].iter_mut().zip(&buf) {
                *o = z.re;
            }
        }
        out
    }
}

/// Real spherical-harmonic coefficients c_{l,m}, 0 ≤ l ≤ L, |m| ≤ l.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoeffs {
    l_max: usize,
    data: Vec<f64>,
}

impl SpectralCoeffs {
    pub fn zeros(l_max: usize) -> Self {
        Self { l_max, data: vec![0.0; (l_max + 1) * (l_max + 1)] }
    }

    pub fn from_vec(l_max: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (l_max + 1) * (l_max + 1) {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                (l_max + 1) * (l_max + 1),
                data.len()
            )));
        }
        Ok(Self { l_max, data })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        self.data[lm_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: f64) {
        self.data[lm_index(l, m)] = v;
    }

    /// Iterates (l, m, c) in packed order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64, f64)> + '_ {
        (0..=self.l_max).flat_map(move |l| {
            (-(l as i64)..=l as i64).map(move |m| (l, m, self.data[lm_index(l, m)]))
        })
    }

    /// Multiply every coefficient by f(l).
    pub fn scale_by_degree(&self, f: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        for l in 0..=self.l_max {
            let s = f(l);
            for m in -(l as i64)..=l as i64 {
                out.data[lm_index(l, m)] *= s;
            }
        }
        out
    }

    /// ∫|∇u|² dv = Σ l(l+1) c².
    pub fn dirichlet_energy(&self) -> f64 {
        self.iter().map(|(l, _, c)| (l * (l + 1)) as f64 * c * c).sum()
    }

    /// L² norm of the part with m ≠ 0 (non-axisymmetric about the z axis).
    pub fn non_axisymmetric_norm(&self) -> f64 {
        self.iter().filter(|(_, m, _)| *m != 0).map(|(_, _, c)| c * c).sum::<f64>().sqrt()
    }

    /// Pointwise evaluation of the expansion.
    pub fn evaluate_at(&self, x: &SpherePoint) -> f64 {
        real_harmonics_at(self.l_max, x).iter().zip(&self.data).map(|(y, c)| y * c).sum()
    }
}

/// One real value per grid node, row-major over (latitude, longitude).
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("grid", &self.grid).field("len", &self.values.len()).finish()
    }
}

impl ScalarField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {} at node {i}", values[i])));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &Arc<SphereGrid>, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn(&SpherePoint) -> f64) -> Self {
        let values = grid.points().iter().map(f).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: &SpectralCoeffs) -> Self {
        Self { grid: grid.clone(), values: grid.synthesis(coeffs) }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / (4.0 * PI)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// (node, value) of the maximum; ties resolve to the first node.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.argmax().1
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Quadrature inner product ∫ f g dv.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch);
        }
        let prod: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(self.grid.integrate(&prod))
    }

    pub fn analysis(&self) -> SpectralCoeffs {
        self.grid.analysis(&self.values)
    }

    /// Band-limited projection synthesis(analysis(f)).
    pub fn project(&self) -> Self {
        Self::from_coeffs(&self.grid, &self.analysis())
    }

    /// Field minus its mean.
    pub fn mean_zero(&self) -> Self {
        self.add_constant(-self.mean())
    }

    /// Δ_{g₀} f through the spectral transform.
    pub fn laplacian(&self) -> Self {
        let c = self.analysis().scale_by_degree(|l| -((l * (l + 1)) as f64));
        Self::from_coeffs(&self.grid, &c)
    }

    /// Δ_{g₀}⁻¹ on the mean-zero part; the l = 0 mode is dropped.
    pub fn inverse_laplacian(&self) -> Self {
        let c = self
            .analysis()
            .scale_by_degree(|l| if l == 0 { 0.0 } else { -1.0 / (l * (l + 1)) as f64 });
        Self::from_coeffs(&self.grid, &c)
    }
}
