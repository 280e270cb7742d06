//! Critical parameter set, generating function and degree counting.
//!
//! All exponents are measured in units of 8π: an element γ of the critical
//! set corresponds to ρ = 8πγ.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when merging floating-point exponents and when
/// deciding membership of ρ/8π in the critical set.
pub const EXPONENT_TOL: f64 = 1e-9;

/// Default truncation of the generating function (covers ρ up to 64π).
pub const DEFAULT_X_MAX: f64 = 8.0;

/// Default cap on the number of generated (k0, mask) products.
pub const DEFAULT_TERM_CAP: usize = 1_000_000;

/// Orders α₁ ≤ … ≤ α_m of the singular points, each > −1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderVector {
    alphas: Vec<f64>,
    #[serde(skip)]
    exact: Option<Vec<Ratio<i64>>>,
}

impl OrderVector {
    pub fn new(alphas: &[f64]) -> Result<Self> {
        for &a in alphas {
            if !(a.is_finite() && a > -1.0) {
                return Err(Error::InvalidOrder(a));
            }
        }
        let mut alphas = alphas.to_vec();
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { alphas, exact: None })
    }

    /// Orders given as exact fractions `num/den`. Exponents built from them
    /// are merged with exact rational arithmetic.
    pub fn from_rationals(fracs: &[(i64, i64)]) -> Result<Self> {
        let mut exact = Vec::with_capacity(fracs.len());
        for &(n, d) in fracs {
            if d == 0 {
                return Err(Error::InvalidArgument("zero denominator".into()));
            }
            let r = Ratio::new(n, d);
            if r <= Ratio::from_integer(-1) {
                return Err(Error::InvalidOrder(n as f64 / d as f64));
            }
            exact.push(r);
        }
        exact.sort();
        let alphas = exact.iter().map(|r| ratio_to_f64(*r)).collect();
        Ok(Self { alphas, exact: Some(exact) })
    }

    pub fn empty() -> Self {
        Self { alphas: Vec::new(), exact: None }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn min_alpha(&self) -> Option<f64> {
        self.alphas.first().copied()
    }

    pub fn all_positive(&self) -> bool {
        self.alphas.iter().all(|&a| a > 0.0)
    }

    fn exact_value(&self, k0: u32, mask: &[usize]) -> Option<Ratio<i64>> {
        let exact = self.exact.as_ref()?;
        let one = Ratio::from_integer(1);
        let mut v = Ratio::from_integer(k0 as i64);
        for &i in mask {
            v += one + exact[i];
        }
        Some(v)
    }
}

fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// An element k0 + Σ_{i∈mask}(1+αᵢ) of the critical set with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub k0: u32,
    /// Indices into the sorted order vector.
    pub mask: Vec<usize>,
    pub value: f64,
}

impl Exponent {
    fn build(orders: &OrderVector, k0: u32, mask: Vec<usize>) -> Self {
        let value = exponent_value(orders, k0, &mask);
        Self { k0, mask, value }
    }

    /// Value recomputed from the provenance.
    pub fn recompute(&self, orders: &OrderVector) -> f64 {
        exponent_value(orders, self.k0, &self.mask)
    }
}

fn exponent_value(orders: &OrderVector, k0: u32, mask: &[usize]) -> f64 {
    if let Some(r) = orders.exact_value(k0, mask) {
        return ratio_to_f64(r);
    }
    k0 as f64 + mask.iter().map(|&i| 1.0 + orders.alphas[i]).sum::<f64>()
}

/// Visit every subset of orders whose base Σ(1+αᵢ) stays at or below `limit`.
fn for_each_mask(orders: &OrderVector, limit: f64, mut f: impl FnMut(&[usize], f64)) {
    fn rec(
        alphas: &[f64],
        start: usize,
        base: f64,
        limit: f64,
        mask: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize], f64),
    ) {
        f(mask, base);
        for i in start..alphas.len() {
            let next = base + 1.0 + alphas[i];
            // sorted ascending: every later index overshoots too
            if next > limit {
                break;
            }
            mask.push(i);
            rec(alphas, i + 1, next, limit, mask, f);
            mask.pop();
        }
    }
    let mut mask = Vec::new();
    rec(&orders.alphas, 0, 0.0, limit, &mut mask, &mut f);
}

fn cmp_exponents(orders: &OrderVector, a: &Exponent, b: &Exponent) -> Ordering {
    match (orders.exact_value(a.k0, &a.mask), orders.exact_value(b.k0, &b.mask)) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.value.partial_cmp(&b.value).unwrap(),
    }
}

fn same_exponent(orders: &OrderVector, a: &Exponent, b: &Exponent) -> bool {
    match (orders.exact_value(a.k0, &a.mask), orders.exact_value(b.k0, &b.mask)) {
        (Some(x), Some(y)) => x == y,
        _ => (a.value - b.value).abs() <= EXPONENT_TOL,
    }
}

/// Distinct elements of Γ(α) that are ≤ `x_max`, strictly increasing.
pub fn gamma_set(orders: &OrderVector, x_max: f64) -> Result<Vec<Exponent>> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("x_max must be positive, got {x_max}")));
    }
    let limit = x_max + 1e-12;
    let mut raw = Vec::new();
    let mut overflow = false;
    for_each_mask(orders, limit, |mask, base| {
        let mut k0 = 0u32;
        while base + k0 as f64 <= limit {
            if k0 > 0 || !mask.is_empty() {
                if raw.len() >= DEFAULT_TERM_CAP {
                    overflow = true;
                    return;
                }
                raw.push(Exponent::build(orders, k0, mask.to_vec()));
            }
            k0 += 1;
        }
    });
    if overflow {
        return Err(Error::TruncationOverflow { terms: raw.len(), cap: DEFAULT_TERM_CAP });
    }
    raw.retain(|e| e.value <= limit);
    raw.sort_by(|a, b| cmp_exponents(orders, a, b));
    let mut out: Vec<Exponent> = Vec::with_capacity(raw.len());
    for e in raw {
        match out.last() {
            Some(last) if same_exponent(orders, last, &e) => {}
            _ => out.push(e),
        }
    }
    Ok(out)
}

/// One term b·x^n of a generalized series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub exponent: Exponent,
    pub coefficient: i64,
}

/// Finite series Σ b x^n with real exponents and integer coefficients,
/// truncated strictly below `truncation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSeries {
    pub terms: Vec<SeriesTerm>,
    pub truncation: f64,
}

impl GeneralizedSeries {
    /// Coefficient at exponent `x` (0 if no stored term matches).
    pub fn coefficient_at(&self, x: f64) -> i64 {
        self.terms
            .iter()
            .find(|t| (t.exponent.value - x).abs() <= EXPONENT_TOL)
            .map_or(0, |t| t.coefficient)
    }

    /// (exponent, coefficient) pairs with nonzero coefficient.
    pub fn nonzero_terms(&self) -> Vec<(f64, i64)> {
        self.terms
            .iter()
            .filter(|t| t.coefficient != 0)
            .map(|t| (t.exponent.value, t.coefficient))
            .collect()
    }

    /// Σ of coefficients with exponent strictly below `x` (includes b₀).
    pub fn partial_sum_below(&self, x: f64) -> i64 {
        self.terms
            .iter()
            .filter(|t| t.exponent.value < x)
            .map(|t| t.coefficient)
            .sum()
    }
}

impl fmt::Display for GeneralizedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (x, b) in self.nonzero_terms() {
            let mag = b.unsigned_abs();
            if first {
                if b < 0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if b < 0 { '-' } else { '+' })?;
            }
            first = false;
            let mono = if x == 0.0 {
                String::new()
            } else if x == 1.0 {
                "x".to_string()
            } else {
                format!("x^{x}")
            };
            match (mag, mono.is_empty()) {
                (_, true) => write!(f, "{mag}")?,
                (1, false) => write!(f, "{mono}")?,
                (_, false) => write!(f, "{mag}{mono}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Integer coefficients of (1+x+x²+…)^{m−2} for m ≥ 2, or (1−x)^{2−m} for
/// m < 2, up to degree `n_max`.
fn prefactor(m: usize, n_max: usize) -> Result<Vec<i64>> {
    let mut c = vec![0i64; n_max + 1];
    c[0] = 1;
    if m >= 2 {
        for _ in 0..m - 2 {
            // multiply by 1/(1−x): prefix sums
            for n in 1..=n_max {
                c[n] = c[n].checked_add(c[n - 1]).ok_or(Error::CoefficientOverflow)?;
            }
        }
    } else {
        for _ in 0..2 - m {
            for n in (1..=n_max).rev() {
                c[n] = c[n].checked_sub(c[n - 1]).ok_or(Error::CoefficientOverflow)?;
            }
        }
    }
    Ok(c)
}

/// Expansion of g(x) = (1+x+x²+…)^{m−2} ∏ᵢ(1 − x^{1+αᵢ}) truncated strictly
/// below `x_max`. Zero coefficients are kept at every Γ element below the
/// cutoff.
pub fn expand_g(orders: &OrderVector, x_max: f64) -> Result<GeneralizedSeries> {
    expand_g_with_cap(orders, x_max, DEFAULT_TERM_CAP)
}

pub fn expand_g_with_cap(orders: &OrderVector, x_max: f64, cap: usize) -> Result<GeneralizedSeries> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("x_max must be positive, got {x_max}")));
    }
    let n_max = x_max.ceil() as usize;
    let pre = prefactor(orders.m(), n_max)?;

    let mut raw: Vec<SeriesTerm> = Vec::new();
    let mut overflow = false;
    for_each_mask(orders, x_max, |mask, base| {
        let sign = if mask.len() % 2 == 0 { 1 } else { -1 };
        for (n, &p) in pre.iter().enumerate() {
            if base + n as f64 >= x_max {
                break;
            }
            if p == 0 {
                continue;
            }
            if raw.len() >= cap {
                overflow = true;
                return;
            }
            raw.push(SeriesTerm {
                exponent: Exponent::build(orders, n as u32, mask.to_vec()),
                coefficient: sign * p,
            });
        }
    });
    if overflow {
        return Err(Error::TruncationOverflow { terms: raw.len() + 1, cap });
    }

    // Zero placeholders so every critical exponent below the cutoff shows up.
    for e in gamma_set(orders, x_max)? {
        if e.value < x_max {
            raw.push(SeriesTerm { exponent: e, coefficient: 0 });
        }
    }

    raw.sort_by(|a, b| cmp_exponents(orders, &a.exponent, &b.exponent));
    let mut terms: Vec<SeriesTerm> = Vec::with_capacity(raw.len());
    for t in raw {
        match terms.last_mut() {
            Some(last) if same_exponent(orders, &last.exponent, &t.exponent) => {
                last.coefficient = last
                    .coefficient
                    .checked_add(t.coefficient)
                    .ok_or(Error::CoefficientOverflow)?;
                // keep the provenance with the smallest k0 as representative
                if t.exponent.k0 < last.exponent.k0 {
                    last.exponent = t.exponent;
                }
            }
            _ => terms.push(t),
        }
    }
    Ok(GeneralizedSeries { terms, truncation: x_max })
}

/// The d̄ table used for ρ just above 8π: 2 for m ≥ 2, 0 for m = 1, −1 for m = 0.
pub fn paper_bar_d(m: usize) -> i64 {
    match m {
        0 => -1,
        1 => 0,
        _ => 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub rho: f64,
    pub rho_over_8pi: f64,
    /// Γ elements strictly below ρ/8π.
    pub gamma_below: Vec<f64>,
    /// b_j at those elements (b₀ = 1 is implicit).
    pub coefficients: Vec<i64>,
    pub degree: i64,
    /// Table value of d̄ when ρ lies just above 8π (between 8π and the next
    /// critical value), otherwise `None`.
    pub paper_bar_d: Option<i64>,
}

fn nearest_critical(gamma: &[Exponent], x: f64) -> Option<f64> {
    gamma
        .iter()
        .map(|e| e.value)
        .min_by(|a, b| (a - x).abs().partial_cmp(&(b - x).abs()).unwrap())
}

/// Leray–Schauder degree d_ρ = Σ_{n_j < ρ/8π} b_j.
pub fn degree(rho: f64, orders: &OrderVector) -> Result<DegreeReport> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let x = rho / (8.0 * PI);
    let gamma = gamma_set(orders, x + 1.0)?;
    if let Some(near) = nearest_critical(&gamma, x) {
        if (near - x).abs() <= EXPONENT_TOL {
            return Err(Error::CriticalRho { rho_over_8pi: x, nearest: near });
        }
    }
    let g = expand_g(orders, x + 1.0)?;
    let mut gamma_below = Vec::new();
    let mut coefficients = Vec::new();
    for t in &g.terms {
        if t.exponent.value > 0.0 && t.exponent.value < x {
            gamma_below.push(t.exponent.value);
            coefficients.push(t.coefficient);
        }
    }
    let degree = g.partial_sum_below(x);
    let next_above_one = gamma.iter().map(|e| e.value).find(|&v| v > 1.0 + EXPONENT_TOL);
    let just_above_8pi = x > 1.0 && next_above_one.is_none_or(|n| x < n);
    Ok(DegreeReport {
        rho,
        rho_over_8pi: x,
        gamma_below,
        coefficients,
        degree,
        paper_bar_d: just_above_8pi.then(|| paper_bar_d(orders.m())),
    })
}

/// d̄ = d_{8π+ε} from the table and from the expansion side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarDReport {
    pub m: usize,
    pub table: i64,
    pub expansion: i64,
    pub coefficient_at_one: i64,
    pub mismatch: bool,
}

pub fn bar_d(orders: &OrderVector) -> Result<BarDReport> {
    let gamma = gamma_set(orders, 3.0)?;
    let next = gamma
        .iter()
        .map(|e| e.value)
        .find(|&v| v > 1.0 + EXPONENT_TOL)
        .unwrap_or(2.0);
    let x = 1.0 + 0.5 * (next - 1.0);
    let rep = degree(8.0 * PI * x, orders)?;
    let g = expand_g(orders, 2.5)?;
    let table = paper_bar_d(orders.m());
    Ok(BarDReport {
        m: orders.m(),
        table,
        expansion: rep.degree,
        coefficient_at_one: g.coefficient_at(1.0),
        mismatch: table != rep.degree,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Exists { degree: Option<i64> },
    Unknown { degree: Option<i64>, reason: String },
    NotCovered { reason: String },
}

impl Verdict {
    pub fn exists(&self) -> bool {
        matches!(self, Verdict::Exists { .. })
    }
}

fn in_8pi_n(x: f64) -> bool {
    let k = x.round();
    k >= 1.0 && (x - k).abs() <= EXPONENT_TOL
}

/// Existence for m ≥ 2 and positive orders: solutions exist for every
/// ρ ∈ (0, 8π(1+α₁)) away from 8πℕ.
pub fn existence_verdict(rho: f64, orders: &OrderVector) -> Result<Verdict> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if orders.m() <= 1 {
        return Ok(Verdict::NotCovered {
            reason: format!(
                "m = {}: the degree argument needs at least two singular points \
                 (for m = 1, K = 1 there are no solutions on [8pi, 8pi(1+alpha)])",
                orders.m()
            ),
        });
    }
    if !orders.all_positive() {
        return Err(Error::InvalidArgument("existence verdict requires all orders > 0".into()));
    }
    let x = rho / (8.0 * PI);
    let degree = match degree(rho, orders) {
        Ok(r) => Some(r.degree),
        Err(Error::CriticalRho { .. }) => None,
        Err(e) => return Err(e),
    };
    let alpha1 = orders.min_alpha().unwrap();
    if in_8pi_n(x) {
        return Ok(Verdict::Unknown { degree, reason: "rho lies in 8pi*N".into() });
    }
    if x < 1.0 + alpha1 {
        Ok(Verdict::Exists { degree })
    } else {
        Ok(Verdict::Unknown { degree, reason: "rho >= 8pi(1+alpha_1)".into() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarDSource {
    Table,
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseVerdict {
    pub r: u32,
    pub s: u32,
    pub r_prime: u32,
    pub s_prime: u32,
    pub m: usize,
    /// 1 − r + s
    pub d_8pi: i64,
    /// d̄ − s′ + r′
    pub d_8pi_alternative: i64,
    pub bar_d: i64,
    pub bar_d_source: BarDSource,
    /// r ≠ s + 1
    pub maxima_criterion: bool,
    /// s′ ≠ r′ + d̄
    pub minima_criterion: bool,
    pub exists: bool,
    pub consistent: bool,
}

/// Existence at ρ = 8π from Morse counts of h.
pub fn morse_existence_check(
    r: u32,
    s: u32,
    r_prime: u32,
    s_prime: u32,
    m: usize,
    bar_d_override: Option<i64>,
) -> MorseVerdict {
    let (bar_d, bar_d_source) = match bar_d_override {
        Some(d) => (d, BarDSource::Override),
        None => (paper_bar_d(m), BarDSource::Table),
    };
    let d_8pi = 1 - r as i64 + s as i64;
    let d_8pi_alternative = bar_d - s_prime as i64 + r_prime as i64;
    let maxima_criterion = r as i64 != s as i64 + 1;
    let minima_criterion = s_prime as i64 != r_prime as i64 + bar_d;
    MorseVerdict {
        r,
        s,
        r_prime,
        s_prime,
        m,
        d_8pi,
        d_8pi_alternative,
        bar_d,
        bar_d_source,
        maxima_criterion,
        minima_criterion,
        exists: maxima_criterion || minima_criterion,
        consistent: d_8pi == d_8pi_alternative,
    }
}
