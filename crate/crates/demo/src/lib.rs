//! Browser demo for `liouville-sphere`.
//!
//! Three operations, each a plain Rust function returning a serializable
//! record plus a `#[wasm_bindgen]` wrapper that takes primitives and returns
//! JSON (`{"error": ...}` on failure):
//!
//! * [`degree_table`]: Γ, g(x) and d_ρ for a list of orders.
//! * [`dilation_probe`]: J_{8π}^h along the dilations concentrating at the
//!   maximum of h for one conical point of order α.
//! * [`solve_heatmap`]: a low-resolution solve of the mean-field equation,
//!   resampled on a latitude/longitude raster.

use std::f64::consts::PI;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use liouville_sphere::potential::{build_h, KExpr, PotentialSpec, SingularityConfig};
use liouville_sphere::series::{bar_d, degree, expand_g, gamma_set, OrderVector};
use liouville_sphere::solver::{dilation_family, evaluate_j, minimize, Init, SolverOptions};
use liouville_sphere::sphere::{SphereGrid, SpherePoint};
use liouville_sphere::{Error, Result};

/// Largest band limit the heatmap accepts.
pub const MAX_DEMO_L: usize = 31;

#[derive(Clone, Debug, Serialize)]
pub struct DegreeRow {
    pub rho_over_8pi: f64,
    /// `None` on the critical set.
    pub degree: Option<i64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeTable {
    pub alphas: Vec<f64>,
    pub gamma: Vec<f64>,
    pub terms: Vec<(f64, i64)>,
    pub series: String,
    pub rows: Vec<DegreeRow>,
    pub bar_d_table: i64,
    pub bar_d_expansion: i64,
}

/// Degrees at `samples` evenly spaced values of ρ/8π in (0, x_max].
pub fn degree_table(alphas: &[f64], x_max: f64, samples: usize) -> Result<DegreeTable> {
    if !(x_max > 0.0 && x_max <= 8.0) || samples == 0 || samples > 2000 {
        return Err(Error::InvalidArgument("need 0 < x_max <= 8 and 1..=2000 samples".into()));
    }
    let orders = OrderVector::new(alphas)?;
    let gamma = gamma_set(&orders, x_max)?.iter().map(|e| e.value).collect();
    let g = expand_g(&orders, x_max)?;
    let rows = (1..=samples)
        .map(|i| {
            let x = x_max * i as f64 / samples as f64;
            DegreeRow { rho_over_8pi: x, degree: degree(8.0 * PI * x, &orders).ok().map(|d| d.degree) }
        })
        .collect();
    let bd = bar_d(&orders)?;
    Ok(DegreeTable {
        alphas: alphas.to_vec(),
        gamma,
        terms: g.nonzero_terms(),
        series: g.to_string(),
        rows,
        bar_d_table: bd.table,
        bar_d_expansion: bd.expansion,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DilationRow {
    pub t: f64,
    pub j: f64,
    /// J − (−8π log max h)
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DilationProbe {
    pub alpha: f64,
    pub max_h: f64,
    /// −8π log max h
    pub bound: f64,
    pub rows: Vec<DilationRow>,
}

/// h with one conical point of order α ≥ 0 at the north pole; the dilations
/// concentrate at the south pole, where h is largest.
pub fn dilation_probe(alpha: f64, ts: &[f64], l_max: usize) -> Result<DilationProbe> {
    if !(alpha >= 0.0 && alpha <= 4.0) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 4]".into()));
    }
    if l_max > 127 {
        return Err(Error::InvalidArgument("l_max must be at most 127".into()));
    }
    let grid = SphereGrid::for_band_limit(l_max)?;
    let spec = PotentialSpec::new(KExpr::default(), SingularityConfig::from_pairs(&[(SpherePoint::north(), alpha)])?);
    let h = build_h(&spec, &grid)?;
    let max_h = spec.h(&SpherePoint::south());
    let bound = -8.0 * PI * max_h.ln();
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let u = dilation_family(t, &SpherePoint::south(), &grid)?;
        let j = evaluate_j(&u, 8.0 * PI, &h)?;
        rows.push(DilationRow { t, j, gap: j - bound });
    }
    Ok(DilationProbe { alpha, max_h, bound, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the north pole; longitude from 0 to 2π.
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub rho: f64,
    pub j: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: String,
}

/// Solves at ρ with singular points given as (θ, φ, α) and samples u on a
/// `width` × `height` equirectangular raster.
pub fn solve_heatmap(rho: f64, singular: &[(f64, f64, f64)], l_max: usize, width: usize, height: usize) -> Result<Heatmap> {
    if l_max > MAX_DEMO_L {
        return Err(Error::InvalidArgument(format!("l_max must be at most {MAX_DEMO_L}")));
    }
    if width == 0 || height == 0 || width * height > 200_000 {
        return Err(Error::InvalidArgument("raster must have between 1 and 200000 cells".into()));
    }
    let grid = SphereGrid::for_band_limit(l_max)?;
    let pairs: Vec<(SpherePoint, f64)> =
        singular.iter().map(|&(theta, phi, a)| (SpherePoint::from_angles(theta, phi), a)).collect();
    let spec = PotentialSpec::new(KExpr::default(), SingularityConfig::from_pairs(&pairs)?);
    let h = build_h(&spec, &grid)?;
    let opts = SolverOptions { max_iter: 400, ..SolverOptions::default() };
    let r = minimize(rho, &h, &Init::Zero, &opts)?;
    let coeffs = r.u.analysis();
    let mut values = Vec::with_capacity(width * height);
    for i in 0..height {
        let theta = PI * (i as f64 + 0.5) / height as f64;
        for j in 0..width {
            let phi = 2.0 * PI * (j as f64 + 0.5) / width as f64;
            values.push(coeffs.evaluate_at(&SpherePoint::from_angles(theta, phi)));
        }
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Heatmap {
        width,
        height,
        values,
        min,
        max,
        rho,
        j: r.j,
        residual: r.residual,
        iterations: r.iterations,
        status: format!("{:?}", r.status),
    })
}

fn to_json<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split([',', ' ', ';'])
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("'{t}': {e}"))))
        .collect()
}

/// `alphas` is a comma-separated list (empty for the regular case).
#[wasm_bindgen(js_name = degreeTable)]
pub fn degree_table_json(alphas: &str, x_max: f64, samples: usize) -> String {
    to_json(parse_list(alphas).and_then(|a| degree_table(&a, x_max, samples)))
}

/// `ts` is a comma-separated list of dilation parameters.
#[wasm_bindgen(js_name = dilationProbe)]
pub fn dilation_probe_json(alpha: f64, ts: &str, l_max: usize) -> String {
    to_json(parse_list(ts).and_then(|t| dilation_probe(alpha, &t, l_max)))
}

/// `singular` is a flat comma-separated list θ₁, φ₁, α₁, θ₂, φ₂, α₂, ...
#[wasm_bindgen(js_name = solveHeatmap)]
pub fn solve_heatmap_json(rho: f64, singular: &str, l_max: usize, width: usize, height: usize) -> String {
    let run = || {
        let flat = parse_list(singular)?;
        if flat.len() % 3 != 0 {
            return Err(Error::InvalidArgument("singular points need theta, phi, alpha triples".into()));
        }
        let triples: Vec<(f64, f64, f64)> = flat.chunks(3).map(|c| (c[0], c[1], c[2])).collect();
        solve_heatmap(rho, &triples, l_max, width, height)
    };
    to_json(run())
}
