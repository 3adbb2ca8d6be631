//! Two-stage nonlinear least-squares range estimation: an FFT search over
//! `y_norm * envelope` followed by Newton refinement of `(omega, phi)` with the
//! fading amplitude eliminated in closed form.

pub mod classic;
pub mod multi;

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::constants::{SPEED_OF_LIGHT, TWO_PI};
use crate::error::{Error, Result};
use crate::signal::ReceivedRecord;

pub const ZERO_PAD: usize = 8;
const ANCHOR_EVERY: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    pub h_hat: f64,
    pub omega_hat: f64,
    pub phi_hat: f64,
    pub tau_hat: f64,
    pub range_hat: f64,
    pub q_value: f64,
    /// Objective at the starting point of the refinement.
    pub q_initial: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with `q_initial`.
    pub q_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { rel_tol: 1e-9, max_iter: 50, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseEstimate {
    /// Frequency of the strongest zero-padded bin.
    pub omega_bin: f64,
    pub phi_bin: f64,
    /// Parabolic interpolation of the peak magnitude.
    pub omega_interp: f64,
    pub phi_interp: f64,
    pub peak_bin: usize,
    pub bin_width: f64,
    /// Another bin had exactly the same magnitude; the lowest frequency won.
    pub tie: bool,
}

/// Per-record products reused by every objective evaluation.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// `y_norm * envelope`
    pub u: Vec<f64>,
    /// `envelope^2`
    pub w: Vec<f64>,
    pub dt: f64,
    w_moments: [f64; 3],
}

impl Prepared {
    pub fn new(y_norm: &[f64], envelope: &[f64], dt: f64) -> Prepared {
        let u: Vec<f64> = y_norm.iter().zip(envelope).map(|(y, r)| y * r).collect();
        let w: Vec<f64> = envelope.iter().map(|r| r * r).collect();
        let mut m = [0.0; 3];
        for (s, &ws) in w.iter().enumerate() {
            let t = s as f64 * dt;
            m[0] += ws;
            m[1] += ws * t;
            m[2] += ws * t * t;
        }
        Prepared { u, w, dt, w_moments: m.map(|x| x * dt) }
    }

    pub fn from_record(record: &ReceivedRecord) -> Prepared {
        Prepared::new(&record.y_norm, record.envelope(), record.dt())
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Numerator `sum u cos(theta) dt` and denominator `sum w cos^2(theta) dt`.
    pub fn num_den(&self, omega: f64, phi: f64) -> (f64, f64) {
        let mut n = 0.0;
        let mut c2sum = 0.0;
        for_each_phasor(self.len(), self.dt, omega, phi, |s, c, sn| {
            n += self.u[s] * c;
            c2sum += self.w[s] * (c * c - sn * sn);
        });
        (n * self.dt, 0.5 * self.w_moments[0] + 0.5 * c2sum * self.dt)
    }

    pub fn objective(&self, omega: f64, phi: f64) -> Result<f64> {
        let (n, d) = self.num_den(omega, phi);
        if !(d.abs() >= 1e-30) {
            return Err(Error::Degenerate(format!("objective denominator {d:e} below 1e-30")));
        }
        Ok(n * n / d)
    }

    /// Objective with gradient and Hessian in `(omega, phi)`.
    pub fn objective_derivs(&self, omega: f64, phi: f64) -> Derivs {
        let mut a = [0.0f64; 10];
        for_each_phasor(self.len(), self.dt, omega, phi, |s, c, sn| {
            let t = s as f64 * self.dt;
            let (u, w) = (self.u[s], self.w[s]);
            let (c2, s2) = (c * c - sn * sn, 2.0 * c * sn);
            let (uc, us, wc, ws) = (u * c, u * sn, w * c2, w * s2);
            a[0] += uc;
            a[1] += uc * t;
            a[2] += uc * t * t;
            a[3] += us;
            a[4] += us * t;
            a[5] += wc;
            a[6] += wc * t;
            a[7] += wc * t * t;
            a[8] += ws;
            a[9] += ws * t;
        });
        let dt = self.dt;
        let a = a.map(|x| x * dt);
        let n = a[0];
        let n_w = -a[4];
        let n_p = -a[3];
        let n_ww = -a[2];
        let n_wp = -a[1];
        let n_pp = -a[0];
        let d = 0.5 * self.w_moments[0] + 0.5 * a[5];
        let d_w = -a[9];
        let d_p = -a[8];
        let d_ww = -2.0 * a[7];
        let d_wp = -2.0 * a[6];
        let d_pp = -2.0 * a[5];
        let q = n * n / d;
        let grad = |ni: f64, di: f64| 2.0 * n * ni / d - n * n * di / (d * d);
        let hess = |ni: f64, nj: f64, nij: f64, di: f64, dj: f64, dij: f64| {
            2.0 * ni * nj / d + 2.0 * n * nij / d - 2.0 * n * ni * dj / (d * d) - 2.0 * n * nj * di / (d * d)
                - n * n * dij / (d * d)
                + 2.0 * n * n * di * dj / (d * d * d)
        };
        Derivs {
            q,
            n,
            d,
            g: [grad(n_w, d_w), grad(n_p, d_p)],
            h: [
                [hess(n_w, n_w, n_ww, d_w, d_w, d_ww), hess(n_w, n_p, n_wp, d_w, d_p, d_wp)],
                [hess(n_w, n_p, n_wp, d_w, d_p, d_wp), hess(n_p, n_p, n_pp, d_p, d_p, d_pp)],
            ],
        }
    }

    /// Closed-form fading estimate `N / D` at `(omega, phi)`.
    pub fn amplitude(&self, omega: f64, phi: f64) -> Result<f64> {
        let (n, d) = self.num_den(omega, phi);
        if !(d.abs() >= 1e-30) {
            return Err(Error::Degenerate(format!("amplitude denominator {d:e} below 1e-30")));
        }
        Ok(n / d)
    }

    /// Discrete-time Fourier sum of `u` at one frequency.
    pub fn dtft(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for_each_phasor(self.len(), self.dt, -omega, 0.0, |s, c, sn| {
            acc += Complex64::new(self.u[s] * c, self.u[s] * sn);
        });
        acc
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Derivs {
    pub q: f64,
    pub n: f64,
    pub d: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

/// Calls `f(s, cos(theta_s), sin(theta_s))` for `theta_s = omega s dt + phi`,
/// advancing a unit phasor and re-anchoring it periodically.
#[inline]
pub(crate) fn for_each_phasor(n: usize, dt: f64, omega: f64, phi: f64, mut f: impl FnMut(usize, f64, f64)) {
    let (rs, rc) = (omega * dt).sin_cos();
    let mut s = 0;
    while s < n {
        let (mut sn, mut c) = (omega * (s as f64 * dt) + phi).sin_cos();
        let end = (s + ANCHOR_EVERY).min(n);
        for k in s..end {
            f(k, c, sn);
            let c_next = c * rc - sn * rs;
            sn = sn * rc + c * rs;
            c = c_next;
        }
        s = end;
    }
}

/// `Q(omega, phi)` on the record's Riemann grid.
pub fn objective_q(omega_hat: f64, phi_hat: f64, record: &ReceivedRecord) -> Result<f64> {
    Prepared::from_record(record).objective(omega_hat, phi_hat)
}

pub fn amplitude_estimate(record: &ReceivedRecord, omega_hat: f64, phi_hat: f64) -> Result<f64> {
    Prepared::from_record(record).amplitude(omega_hat, phi_hat)
}

/// Reusable FFT plan and buffers for one record length.
pub struct CoarseStage {
    len: usize,
    fft: Arc<dyn RealToComplex<f64>>,
    input: Vec<f64>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CoarseStage {
    pub fn new(len: usize) -> CoarseStage {
        let mut planner = RealFftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(len * ZERO_PAD);
        let input = fft.make_input_vec();
        let spectrum = fft.make_output_vec();
        let scratch = fft.make_scratch_vec();
        CoarseStage { len, fft, input, spectrum, scratch }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Zero-padded spectrum of `u`; entry `k` sits at `2 pi k / (8 T)`.
    pub fn spectrum(&mut self, u: &[f64]) -> &[Complex64] {
        assert_eq!(u.len(), self.len, "record length does not match the plan");
        self.input[..self.len].copy_from_slice(u);
        self.input[self.len..].iter_mut().for_each(|x| *x = 0.0);
        self.fft
            .process_with_scratch(&mut self.input, &mut self.spectrum, &mut self.scratch)
            .expect("buffer sizes come from the plan");
        &self.spectrum
    }

    pub fn estimate(&mut self, prep: &Prepared) -> Result<CoarseEstimate> {
        if prep.is_empty() {
            return Err(Error::EmptyRecord);
        }
        let bin_width = TWO_PI / (ZERO_PAD as f64 * prep.len() as f64 * prep.dt);
        let spec = self.spectrum(&prep.u);
        let power: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
        let last = power.len() - 1;
        let (k, tie) = peak_index(&power, 1, last);
        let phi_bin = spec[k].arg();
        let omega_bin = k as f64 * bin_width;
        let offset = parabolic_offset(spec[k - 1].norm(), spec[k].norm(), spec[(k + 1).min(last)].norm());
        let omega_interp = (k as f64 + offset) * bin_width;
        let phi_interp = if offset == 0.0 { phi_bin } else { prep.dtft(omega_interp).arg() };
        Ok(CoarseEstimate { omega_bin, phi_bin, omega_interp, phi_interp, peak_bin: k, bin_width, tie })
    }
}

/// Largest entry in `mags[lo..hi]`; ties keep the lowest index.
pub(crate) fn peak_index(mags: &[f64], lo: usize, hi: usize) -> (usize, bool) {
    let mut best = lo;
    let mut tie = false;
    for k in lo + 1..hi {
        if mags[k] > mags[best] {
            best = k;
            tie = false;
        } else if mags[k] == mags[best] {
            tie = true;
        }
    }
    (best, tie)
}

pub(crate) fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den >= 0.0 || !den.is_finite() {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

pub fn coarse_estimate(record: &ReceivedRecord) -> Result<CoarseEstimate> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    CoarseStage::new(record.len()).estimate(&Prepared::from_record(record))
}

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TWO_PI);
    if w > std::f64::consts::PI { w - TWO_PI } else { w }
}

/// Newton ascent on `Q` from `(omega0, phi0)`.
pub fn refine(prep: &Prepared, omega0: f64, phi0: f64, opts: &NewtonOptions) -> Result<(f64, f64, f64, Vec<f64>, bool)> {
    let mut omega = omega0;
    let mut phi = phi0;
    let mut cur = prep.objective_derivs(omega, phi);
    if !cur.q.is_finite() {
        return Err(Error::NonFinite { iteration: 0, omega, phi, history: vec![cur.q] });
    }
    let mut history = vec![cur.q];
    let mut converged = false;
    for iter in 0..opts.max_iter {
        let [g0, g1] = cur.g;
        let [[h00, h01], [_, h11]] = cur.h;
        let det = h00 * h11 - h01 * h01;
        let newton = h00 < 0.0 && det > 0.0;
        let (dw, dp) = if newton {
            ((-h11 * g0 + h01 * g1) / det, (h01 * g0 - h00 * g1) / det)
        } else {
            let s0 = if h00 != 0.0 { h00.abs() } else { 1.0 };
            let s1 = if h11 != 0.0 { h11.abs() } else { 1.0 };
            (g0 / s0, g1 / s1)
        };
        // Newton decrement: the quadratic model gain of the full step.
        if newton && 0.5 * (g0 * dw + g1 * dp) <= opts.rel_tol * cur.q.abs() {
            converged = true;
            break;
        }
        let span = prep.len() as f64 * prep.dt;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            // Steps that move no sample's phase by more than 1e-12 rad
            // cannot change Q beyond rounding.
            if step * (dw.abs() * span + dp.abs()) < 1e-12 {
                break;
            }
            let (w_try, p_try) = (omega + step * dw, phi + step * dp);
            let (n, d) = prep.num_den(w_try, p_try);
            let q_try = n * n / d;
            if !q_try.is_finite() {
                history.push(q_try);
                return Err(Error::NonFinite { iteration: iter + 1, omega: w_try, phi: p_try, history });
            }
            if q_try - cur.q > opts.rel_tol * cur.q.abs() {
                accepted = Some((w_try, p_try));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((w_new, p_new)) => {
                omega = w_new;
                phi = p_new;
                cur = prep.objective_derivs(omega, phi);
                history.push(cur.q);
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok((omega, phi, cur.q, history, converged))
}

pub fn finish_estimate(
    prep: &Prepared,
    omega: f64,
    phi: f64,
    history: Vec<f64>,
    converged: bool,
    sweep_slope: f64,
    tau_ref: f64,
) -> Result<RangeEstimate> {
    let h_hat = prep.amplitude(omega, phi)?;
    let tau_hat = omega / sweep_slope + tau_ref;
    Ok(RangeEstimate {
        h_hat,
        omega_hat: omega,
        phi_hat: wrap_phase(phi),
        tau_hat,
        range_hat: 0.5 * SPEED_OF_LIGHT * tau_hat,
        q_value: *history.last().expect("history starts with the initial value"),
        q_initial: history[0],
        iterations: history.len() - 1,
        converged,
        q_history: history,
    })
}

pub fn newton_refine(record: &ReceivedRecord, omega_hat0: f64, phi_hat0: f64, opts: &NewtonOptions) -> Result<RangeEstimate> {
    let prep = Prepared::from_record(record);
    let (w, p, _, hist, conv) = refine(&prep, omega_hat0, phi_hat0, opts)?;
    finish_estimate(&prep, w, p, hist, conv, record.sweep_slope(), record.tau_ref())
}

/// Coarse plus Newton pipeline with a reusable FFT plan.
pub struct RangeEstimator {
    coarse: CoarseStage,
    pub opts: NewtonOptions,
}

impl RangeEstimator {
    pub fn new(len: usize, opts: NewtonOptions) -> RangeEstimator {
        RangeEstimator { coarse: CoarseStage::new(len), opts }
    }

    pub fn coarse_stage(&mut self) -> &mut CoarseStage {
        &mut self.coarse
    }

    pub fn estimate(&mut self, record: &ReceivedRecord) -> Result<RangeEstimate> {
        let prep = Prepared::from_record(record);
        self.estimate_prepared(&prep, record.sweep_slope(), record.tau_ref())
    }

    pub fn estimate_prepared(&mut self, prep: &Prepared, sweep_slope: f64, tau_ref: f64) -> Result<RangeEstimate> {
        let c = self.coarse.estimate(prep)?;
        // Start from whichever coarse point scores higher.
        let q_bin = prep.objective(c.omega_bin, c.phi_bin)?;
        let q_int = prep.objective(c.omega_interp, c.phi_interp)?;
        let (w0, p0) = if q_int >= q_bin { (c.omega_interp, c.phi_interp) } else { (c.omega_bin, c.phi_bin) };
        let (w, p, _, hist, conv) = refine(prep, w0, p0, &self.opts)?;
        finish_estimate(prep, w, p, hist, conv, sweep_slope, tau_ref)
    }
}

pub fn estimate_range(record: &ReceivedRecord, opts: &NewtonOptions) -> Result<RangeEstimate> {
    RangeEstimator::new(record.len(), *opts).estimate(record)
}

/// One JSON-lines row per estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub seed: u64,
    pub truth_tau: f64,
    pub tau_hat: f64,
    pub range_hat: f64,
    pub h_hat: f64,
    pub q_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimateRow {
    pub fn new(seed: u64, truth_tau: f64, e: &RangeEstimate) -> EstimateRow {
        EstimateRow {
            seed,
            truth_tau,
            tau_hat: e.tau_hat,
            range_hat: e.range_hat,
            h_hat: e.h_hat,
            q_value: e.q_value,
            iterations: e.iterations,
            converged: e.converged,
        }
    }
}
