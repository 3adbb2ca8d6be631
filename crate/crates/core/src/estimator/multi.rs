//! Several echoes at once: greedy peak picking on the residual spectrum, then
//! joint Newton refinement with all amplitudes eliminated in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{estimate_range, for_each_phasor, parabolic_offset, refine, CoarseStage, NewtonOptions, Prepared, ZERO_PAD};
use crate::constants::{SPEED_OF_LIGHT, TWO_PI};
use crate::error::{Error, Result};
use crate::signal::ReceivedRecord;

/// Peaks closer than this many zero-padded bins to an earlier pick are skipped.
pub const EXCLUSION_BINS: usize = 4;
/// Noise-only false-alarm probability over the whole spectrum.
const FALSE_ALARM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub h_hat: f64,
    pub omega_hat: f64,
    pub phi_hat: f64,
    pub tau_hat: f64,
    pub range_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTargetEstimate {
    pub targets: Vec<TargetEstimate>,
    pub q_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fewer than the requested number of peaks cleared the noise floor.
    pub partial: bool,
}

struct Eval {
    q: f64,
    amps: DVector<f64>,
    grad: Vec<f64>,
}

/// Joint objective over `x = (omega_1..omega_M, phi_1..phi_M)`.
fn evaluate(prep: &Prepared, x: &[f64], with_grad: bool) -> Option<Eval> {
    let m = x.len() / 2;
    let n = prep.len();
    let dt = prep.dt;
    let mut cos = vec![vec![0.0; n]; m];
    let mut sin = vec![vec![0.0; n]; m];
    for i in 0..m {
        let (ci, si) = (&mut cos[i], &mut sin[i]);
        for_each_phasor(n, dt, x[i], x[m + i], |s, c, sn| {
            ci[s] = c;
            si[s] = sn;
        });
    }
    let mut b = DVector::<f64>::zeros(m);
    let mut g = DMatrix::<f64>::zeros(m, m);
    for s in 0..n {
        let (u, w) = (prep.u[s], prep.w[s]);
        for i in 0..m {
            b[i] += u * cos[i][s];
            for j in 0..=i {
                g[(i, j)] += w * cos[i][s] * cos[j][s];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    b *= dt;
    g *= dt;
    let amps = g.clone().cholesky()?.solve(&b);
    let q = b.dot(&amps);
    let mut grad = vec![0.0; 2 * m];
    if with_grad {
        for s in 0..n {
            let t = s as f64 * dt;
            let model: f64 = (0..m).map(|i| amps[i] * cos[i][s]).sum();
            let r = prep.u[s] - prep.w[s] * model;
            for i in 0..m {
                let v = -2.0 * amps[i] * r * sin[i][s] * dt;
                grad[i] += v * t;
                grad[m + i] += v;
            }
        }
    }
    Some(Eval { q, amps, grad })
}

fn hessian_fd(prep: &Prepared, x: &[f64], scales: &[f64]) -> Option<DMatrix<f64>> {
    let p = x.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        let eps = 1e-5 * scales[k];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += eps;
        xm[k] -= eps;
        let gp = evaluate(prep, &xp, true)?.grad;
        let gm = evaluate(prep, &xm, true)?.grad;
        for j in 0..p {
            h[(j, k)] = (gp[j] - gm[j]) / (2.0 * eps);
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

pub fn estimate_multi(record: &ReceivedRecord, m_targets: usize, opts: &NewtonOptions) -> Result<MultiTargetEstimate> {
    if m_targets == 0 {
        return Err(Error::Validation { name: "m_targets", reason: "must be at least 1".into() });
    }
    if m_targets == 1 {
        let e = estimate_range(record, opts)?;
        return Ok(MultiTargetEstimate {
            targets: vec![TargetEstimate {
                h_hat: e.h_hat,
                omega_hat: e.omega_hat,
                phi_hat: e.phi_hat,
                tau_hat: e.tau_hat,
                range_hat: e.range_hat,
            }],
            q_value: e.q_value,
            iterations: e.iterations,
            converged: e.converged,
            partial: false,
        });
    }

    let prep = Prepared::from_record(record);
    let n = prep.len();
    let t_sym = n as f64 * prep.dt;
    let bin_width = TWO_PI / (ZERO_PAD as f64 * t_sym);
    let mut stage = CoarseStage::new(n);
    // Expected noise power per bin of the spectrum of y_norm * envelope.
    let noise_power: f64 = prep.w.iter().sum::<f64>() * (n as f64 / t_sym);
    let n_bins = (ZERO_PAD * n / 2) as f64;
    let threshold = noise_power * (n_bins / FALSE_ALARM).ln();

    let mut residual = prep.clone();
    let mut picks: Vec<(f64, f64, usize)> = Vec::new();
    let mut partial = false;
    for _ in 0..m_targets {
        let spec = stage.spectrum(&residual.u);
        let mags: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
        let last = mags.len() - 1;
        let mut best: Option<usize> = None;
        for k in 1..last {
            if picks.iter().any(|&(_, _, b)| k.abs_diff(b) <= EXCLUSION_BINS) {
                continue;
            }
            if best.is_none_or(|b| mags[k] > mags[b]) {
                best = Some(k);
            }
        }
        let Some(k) = best else {
            partial = true;
            break;
        };
        if mags[k] * mags[k] < threshold {
            partial = true;
            break;
        }
        let offset = parabolic_offset(mags[k - 1], mags[k], mags[k + 1]);
        let w0 = (k as f64 + offset) * bin_width;
        let p0 = residual.dtft(w0).arg();
        let (w, p, _, _, _) = refine(&residual, w0, p0, opts)?;
        let amp = residual.amplitude(w, p)?;
        for_each_phasor(n, prep.dt, w, p, |s, c, _| {
            residual.u[s] -= amp * residual.w[s] * c;
        });
        picks.push((w, p, k));
    }
    if picks.is_empty() {
        return Ok(MultiTargetEstimate { targets: vec![], q_value: 0.0, iterations: 0, converged: false, partial: true });
    }

    let m = picks.len();
    let mut x: Vec<f64> = picks.iter().map(|p| p.0).chain(picks.iter().map(|p| p.1)).collect();
    let scales: Vec<f64> = (0..2 * m).map(|i| if i < m { 1.0 / t_sym } else { 1.0 }).collect();
    let mut cur = evaluate(&prep, &x, true).ok_or_else(|| Error::Degenerate("singular Gram matrix".into()))?;
    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..opts.max_iter {
        let hess = hessian_fd(&prep, &x, &scales).ok_or_else(|| Error::Degenerate("singular Gram matrix".into()))?;
        let g = DVector::from_vec(cur.grad.clone());
        let step = match (-&hess).cholesky() {
            Some(ch) => ch.solve(&g),
            None => DVector::from_iterator(2 * m, (0..2 * m).map(|i| g[i] / hess[(i, i)].abs().max(1e-300))),
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            match evaluate(&prep, &cand, false) {
                Some(e) if !e.q.is_finite() => {
                    return Err(Error::NonFinite { iteration: iter + 1, omega: cand[0], phi: cand[m], history: vec![cur.q, e.q] });
                }
                Some(e) if e.q - cur.q > opts.rel_tol * cur.q.abs() => {
                    x = cand;
                    cur = evaluate(&prep, &x, true).expect("just evaluated");
                    accepted = true;
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        if !accepted {
            converged = true;
            break;
        }
        iterations += 1;
    }

    let alpha = record.sweep_slope();
    let tau_ref = record.tau_ref();
    let targets = (0..m)
        .map(|i| {
            let tau_hat = x[i] / alpha + tau_ref;
            TargetEstimate {
                h_hat: cur.amps[i],
                omega_hat: x[i],
                phi_hat: x[m + i].rem_euclid(TWO_PI),
                tau_hat,
                range_hat: 0.5 * SPEED_OF_LIGHT * tau_hat,
            }
        })
        .collect();
    Ok(MultiTargetEstimate { targets, q_value: cur.q, iterations, converged, partial })
}
