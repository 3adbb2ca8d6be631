//! Primal-dual subgradient ascent of the mean squared envelope under the
//! average-power and nonnegativity constraints.
//!
//! Powers are handled as `x = P / P_avg` and the objective is divided by its
//! value at `x = 1`, so the default hyperparameters are scale free.

use super::TrajectoryModel;
use crate::error::{Error, Result};
use crate::scene::{PowerTrajectory, Provenance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdsOptions {
    /// Augmentation weight in normalized units.
    pub beta: f64,
    /// Largest first-step change of any sample, as a fraction of `P_avg`.
    pub first_step: f64,
    pub max_iter: usize,
    /// Relative objective change over `window` iterations that ends the run.
    pub tol: f64,
    pub window: usize,
}

impl Default for PdsOptions {
    fn default() -> Self {
        PdsOptions { beta: 10.0, first_step: 0.05, max_iter: 5000, tol: 1e-7, window: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdsState {
    /// Normalized power iterate.
    pub p: Vec<f64>,
    pub nu: Vec<f64>,
    pub upsilon: f64,
    pub beta: f64,
    pub step: f64,
    pub iter: usize,
}

#[derive(Debug, Clone)]
pub struct PdsOutcome {
    pub trajectory: PowerTrajectory,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub state: PdsState,
}

fn project(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    if mean > 1.0 {
        out.iter_mut().for_each(|v| *v /= mean);
    }
    out
}

/// Refines `p_init` (projected first if infeasible). `model` must be on the
/// same grid as `p_init`.
pub fn pds_optimize(p_init: &PowerTrajectory, model: &TrajectoryModel, opts: &PdsOptions) -> Result<PdsOutcome> {
    if p_init.samples.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if p_init.samples.iter().any(|p| !p.is_finite()) {
        return Err(Error::Validation { name: "p_init", reason: "non-finite sample".into() });
    }
    let n = p_init.s_count();
    if model.len() != n {
        return Err(Error::Validation { name: "p_init", reason: format!("{n} samples but the model has {}", model.len()) });
    }
    let budget = p_init.p_avg_budget;
    if !(budget > 0.0) {
        return Err(Error::Validation { name: "p_avg_budget", reason: "must be positive".into() });
    }
    let ones = vec![budget; n];
    let scale = model.mean_envelope_sq(&ones);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate("envelope vanishes at the budget power".into()));
    }
    let objective = |x: &[f64]| {
        x.iter().enumerate().map(|(s, &v)| model.envelope_sq(s, v * budget)).sum::<f64>() / (n as f64 * scale)
    };
    let grad_into = |x: &[f64], out: &mut [f64]| {
        for (s, (&v, o)) in x.iter().zip(out.iter_mut()).enumerate() {
            *o = model.envelope_sq_grad(s, v * budget) * budget / scale;
        }
    };

    let mut x = project(&p_init.samples.iter().map(|&p| p / budget).collect::<Vec<_>>());
    let initial_objective = objective(&x);
    let mut best_x = x.clone();
    let mut best = initial_objective;

    let mut r_grad = vec![0.0; n];
    grad_into(&x, &mut r_grad);
    // Dual warm start: least-squares multiplier of the budget constraint at
    // the starting point.
    let active: Vec<f64> = x.iter().zip(&r_grad).filter(|(v, _)| **v > 0.0).map(|(_, g)| *g).collect();
    let mut upsilon = if active.is_empty() { 0.0 } else { (active.iter().sum::<f64>() / active.len() as f64).max(0.0) };
    let mut nu = vec![0.0; n];
    let beta = opts.beta;

    let subgradient = |x: &[f64], r_grad: &[f64], upsilon: f64, nu: &[f64], out: &mut [f64]| {
        let f = (x.iter().sum::<f64>() / n as f64 - 1.0).max(0.0);
        for s in 0..n {
            let mut g = -r_grad[s];
            if f > 0.0 {
                g += upsilon + 2.0 * beta * f;
            }
            if x[s] < 0.0 {
                g -= nu[s] + 2.0 * beta * (-x[s]);
            }
            out[s] = g;
        }
        f
    };

    let mut g = vec![0.0; n];
    subgradient(&x, &r_grad, upsilon, &nu, &mut g);
    // Scale by the objective gradient rather than the full subgradient, which
    // vanishes at a stationary start.
    let gmax = r_grad.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let step0 = if gmax > 0.0 { opts.first_step / gmax } else { 0.0 };
    let mut history = vec![initial_objective];
    let mut iter = 0;
    let mut step = step0;
    while iter < opts.max_iter && step0 > 0.0 {
        step = step0 / ((1 + iter) as f64).sqrt();
        for s in 0..n {
            x[s] -= step * g[s];
        }
        let f = (x.iter().sum::<f64>() / n as f64 - 1.0).max(0.0);
        upsilon += step * f;
        for s in 0..n {
            nu[s] += step * (-x[s]).max(0.0);
        }
        iter += 1;

        let cand = project(&x);
        let val = objective(&cand);
        if !val.is_finite() {
            return Err(Error::Infeasible { iterations: iter, last_mean: x.iter().sum::<f64>() / n as f64 * budget, budget });
        }
        if val > best {
            best = val;
            best_x = cand;
        }
        history.push(val);
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            if (val - old).abs() <= opts.tol * val.abs() {
                break;
            }
        }
        grad_into(&x, &mut r_grad);
        subgradient(&x, &r_grad, upsilon, &nu, &mut g);
    }

    if let Some(polished) = kkt_polish(&best_x, &grad_into) {
        let val = objective(&polished);
        if val.is_finite() && val >= best {
            best = val;
            best_x = polished;
        }
    }

    let samples: Vec<f64> = best_x.iter().map(|&v| v * budget).collect();
    let trajectory = PowerTrajectory { samples, p_avg_budget: budget, provenance: Provenance::PdsOptimized };
    if !trajectory.is_feasible(1e-9) {
        return Err(Error::Infeasible { iterations: iter, last_mean: trajectory.mean(), budget });
    }
    Ok(PdsOutcome {
        trajectory,
        objective: best * scale,
        initial_objective: initial_objective * scale,
        iterations: iter,
        state: PdsState { p: x, nu, upsilon, beta, step, iter },
    })
}

/// Newton iteration on the stationarity conditions `r'_s(x_s) = upsilon` over
/// the active samples with the budget held at equality. Returns `None` when an
/// active sample sits where the objective is locally convex.
fn kkt_polish(x0: &[f64], grad_into: &dyn Fn(&[f64], &mut [f64])) -> Option<Vec<f64>> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for _ in 0..40 {
        let eps: Vec<f64> = x.iter().map(|v| 1e-6 * v.max(1e-3)).collect();
        let xp: Vec<f64> = x.iter().zip(&eps).map(|(v, e)| v + e).collect();
        let xm: Vec<f64> = x.iter().zip(&eps).map(|(v, e)| (v - e).max(0.0)).collect();
        grad_into(&x, &mut g);
        grad_into(&xp, &mut gp);
        grad_into(&xm, &mut gm);
        let mut inv_sum = 0.0;
        let mut weighted = 0.0;
        let mut active = 0usize;
        let mut curv = vec![0.0; n];
        for s in 0..n {
            if x[s] <= 0.0 {
                continue;
            }
            let c = (gp[s] - gm[s]) / (xp[s] - xm[s]);
            if !(c < 0.0) {
                return None;
            }
            curv[s] = c;
            inv_sum += 1.0 / c;
            weighted += g[s] / c;
            active += 1;
        }
        if active == 0 {
            return None;
        }
        let residual = n as f64 - x.iter().sum::<f64>();
        let upsilon = (residual + weighted) / inv_sum;
        let mut worst = 0.0f64;
        for s in 0..n {
            if x[s] <= 0.0 {
                continue;
            }
            let dx = (upsilon - g[s]) / curv[s];
            worst = worst.max(dx.abs());
            x[s] = (x[s] + dx).max(0.0);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if worst < 1e-12 {
            break;
        }
    }
    Some(project(&x))
}
