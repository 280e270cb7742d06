//! Preconditioned limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    /// Relative decrease of f below which an iteration counts as stalled.
    pub stall_rel: f64,
    /// Consecutive stalled iterations that end the run.
    pub stall_iters: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 12, max_iter: 2000, initial_step: 1.0, backtrack: 0.5, armijo_c1: 1e-4, max_backtracks: 60, stall_rel: 1e-15, stall_iters: 10 }
    }
}

/// What the monitor tells the iteration to do after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The monitor stopped the run.
    Monitor,
    MaxIter,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
    /// The objective stopped decreasing at round-off level.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective`, which returns (f, ∇f). `precond` applies the
/// inverse metric to a gradient and `monitor` sees every iterate
/// (including the start) as (iteration, x, f, ∇f).
pub fn lbfgs<F, P, M>(
    x0: Vec<f64>,
    mut objective: F,
    precond: P,
    opts: &LbfgsOptions,
    mut monitor: M,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: Fn(&[f64]) -> Vec<f64>,
    M: FnMut(usize, &[f64], f64, &[f64]) -> Result<Control>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = objective(&x)?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        if monitor(iter, &x, f, &g)? == Control::Stop {
            return Ok(LbfgsOutcome { x, f, grad: g, iterations: iter, termination: Termination::Monitor });
        }

        let mut d = two_loop(&g, &hist, &precond);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = precond(&g).into_iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                return Ok(LbfgsOutcome { x, f, grad: g, iterations: iter, termination: Termination::LineSearchFailed });
            }
        }

        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            match objective(&trial) {
                Ok((ft, gt)) if ft.is_finite() && ft <= f + opts.armijo_c1 * step * slope => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                _ => step *= opts.backtrack,
            }
        }
        let Some((xn, fnew, gn)) = accepted else {
            if !hist.is_empty() {
                hist.clear();
                continue;
            }
            return Ok(LbfgsOutcome { x, f, grad: g, iterations: iter, termination: Termination::LineSearchFailed });
        };

        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        if f - fnew <= opts.stall_rel * f.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = xn;
        f = fnew;
        g = gn;
        if stalled >= opts.stall_iters {
            return Ok(LbfgsOutcome { x, f, grad: g, iterations: iter + 1, termination: Termination::Stalled });
        }
    }
    if monitor(opts.max_iter, &x, f, &g)? == Control::Stop {
        return Ok(LbfgsOutcome { x, f, grad: g, iterations: opts.max_iter, termination: Termination::Monitor });
    }
    Ok(LbfgsOutcome { x, f, grad: g, iterations: opts.max_iter, termination: Termination::MaxIter })
}

fn two_loop<P: Fn(&[f64]) -> Vec<f64>>(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, precond: &P) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, r) in hist.iter().rev() {
        let a = r * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let mut z = precond(&q);
    if let Some((s, y, _)) = hist.back() {
        let py = precond(y);
        let gamma = dot(s, y) / dot(y, &py);
        if gamma.is_finite() && gamma > 0.0 {
            for zi in z.iter_mut() {
                *zi *= gamma;
            }
        }
    }
    for ((s, y, r), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = r * dot(y, &z);
        for (zi, si) in z.iter_mut().zip(s) {
            *zi += (a - b) * si;
        }
    }
    z.iter_mut().for_each(|v| *v = -*v);
    z
}
