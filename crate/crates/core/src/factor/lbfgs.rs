//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Small self-contained minimizer for the THC objective: two-loop recursion,
//! bracketing line search with bisection zoom, best iterate tracked across
//! all evaluations so the result never exceeds the starting loss. Non-finite
//! trial points fail the current bracket instead of aborting; a non-finite
//! starting point is an error.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    /// Loss at the returned iterate.
    pub f: f64,
    /// Loss at the starting point.
    pub f0: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Loss after each accepted iteration, starting with the initial loss.
    pub history: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Probe {
    step: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Strong-Wolfe line search (bracket then bisection zoom).
fn wolfe_search<F>(
    eval: &mut F,
    x: &[f64],
    f0: f64,
    dg0: f64,
    dir: &[f64],
) -> Option<Probe>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let probe = |eval: &mut F, step: f64| -> Probe {
        let mut xt = vec![0.0; n];
        for ((t, xi), di) in xt.iter_mut().zip(x).zip(dir) {
            *t = xi + step * di;
        }
        let mut gt = vec![0.0; n];
        let ft = eval(&xt, &mut gt);
        let dgt = dot(&gt, dir);
        Probe {
            step,
            x: xt,
            f: ft,
            g: gt,
            dg: dgt,
        }
    };

    let mut lo: Option<Probe> = None;
    let mut prev_step = 0.0f64;
    let mut prev_f = f0;
    let mut step = 1.0f64;
    let mut hi_step: Option<f64> = None;

    for iter in 0..30 {
        let p = probe(eval, step);
        let armijo_fail =
            !p.f.is_finite() || p.f > f0 + C1 * step * dg0 || (iter > 0 && p.f >= prev_f);
        if armijo_fail {
            hi_step = Some(step);
            break;
        }
        if p.dg.abs() <= -C2 * dg0 {
            return Some(p);
        }
        if p.dg >= 0.0 {
            hi_step = Some(prev_step);
            lo = Some(p);
            break;
        }
        prev_step = step;
        prev_f = p.f;
        lo = Some(p);
        step *= 2.0;
    }

    // zoom by bisection between the low point (Armijo holds) and the bound
    let mut lo = match lo {
        Some(p) => p,
        None => Probe {
            step: 0.0,
            x: x.to_vec(),
            f: f0,
            g: Vec::new(),
            dg: dg0,
        },
    };
    let mut hi = hi_step.unwrap_or(lo.step * 2.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo.step + hi);
        if (hi - lo.step).abs() <= 1e-16 * hi.abs().max(1.0) {
            break;
        }
        let p = probe(eval, mid);
        if !p.f.is_finite() || p.f > f0 + C1 * mid * dg0 || p.f >= lo.f {
            hi = mid;
            continue;
        }
        if p.dg.abs() <= -C2 * dg0 {
            return Some(p);
        }
        if p.dg * (hi - lo.step) >= 0.0 {
            hi = lo.step;
        }
        lo = p;
    }
    if lo.step > 0.0 && lo.f < f0 {
        return Some(lo);
    }
    None
}

/// Minimize `f` with gradient written into the second argument.
/// Convergence: gradient infinity norm at or below `grad_tol`.
pub fn minimize<F>(
    mut eval: F,
    x0: Vec<f64>,
    max_iter: usize,
    grad_tol: f64,
    memory: usize,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite loss or gradient at start"));
    }
    let f0 = f;
    let mut best_x = x.clone();
    let mut best_f = f;
    let mut history = vec![f];

    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();

    let mut converged = inf_norm(&g) <= grad_tol;
    let mut iterations = 0usize;

    while !converged && iterations < max_iter {
        // two-loop recursion
        let mut q = g.clone();
        let k = s_list.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&s_list[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_list[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let last = k - 1;
            let gamma = dot(&s_list[last], &y_list[last]) / dot(&y_list[last], &y_list[last]);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let beta = rho[i] * dot(&y_list[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_list[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        let quasi_newton: Vec<f64> = q.iter().map(|v| -v).collect();

        // line search along the quasi-Newton direction; on failure drop the
        // memory and retry once along steepest descent
        let mut found: Option<Probe> = None;
        for attempt in 0..2 {
            let (dir, dg) = if attempt == 0 {
                let dg = dot(&quasi_newton, &g);
                if dg >= 0.0 {
                    continue;
                }
                (quasi_newton.clone(), dg)
            } else {
                s_list.clear();
                y_list.clear();
                rho.clear();
                let dir: Vec<f64> = g.iter().map(|v| -v).collect();
                let dg = -dot(&g, &g);
                (dir, dg)
            };
            found = wolfe_search(&mut eval, &x, f, dg, &dir);
            if found.is_some() {
                break;
            }
        }
        let Some(p) = found else {
            break; // no decrease along either direction: stationary to precision
        };

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let sn = dot(&s, &s).sqrt();
        let yn = dot(&y, &y).sqrt();
        if sy > 1e-12 * sn * yn {
            s_list.push(s);
            y_list.push(y);
            rho.push(1.0 / sy);
            if s_list.len() > memory {
                s_list.remove(0);
                y_list.remove(0);
                rho.remove(0);
            }
        }
        x = p.x;
        g = p.g;
        f = p.f;
        if g.iter().any(|v| !v.is_finite()) || !f.is_finite() {
            return Err(Error::numerical("non-finite loss or gradient"));
        }
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        history.push(f);
        iterations += 1;
        converged = inf_norm(&g) <= grad_tol;
    }

    Ok(LbfgsOutcome {
        x: best_x,
        f: best_f,
        f0,
        iterations,
        converged,
        history,
    })
}
