//! Baseline estimator for the classic heterodyne receiver: dechirp, FFT peak,
//! then Newton on the periodogram of the resulting complex tone.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{parabolic_offset, peak_index, NewtonOptions, ZERO_PAD};
use crate::constants::{SPEED_OF_LIGHT, TWO_PI};
use crate::error::{Error, Result};
use crate::scene::lfm_phase;
use crate::signal::ClassicRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicEstimate {
    pub omega_hat: f64,
    pub tau_hat: f64,
    pub range_hat: f64,
    pub amplitude_hat: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub struct ClassicEstimator {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    pub opts: NewtonOptions,
}

/// Periodogram value and its first two derivatives in omega.
fn periodogram(z: &[Complex64], dt: f64, omega: f64) -> (f64, f64, f64) {
    let mut f0 = Complex64::new(0.0, 0.0);
    let mut f1 = Complex64::new(0.0, 0.0);
    let mut f2 = Complex64::new(0.0, 0.0);
    super::for_each_phasor(z.len(), dt, -omega, 0.0, |s, c, sn| {
        let t = s as f64 * dt;
        let v = z[s] * Complex64::new(c, sn);
        f0 += v;
        f1 += v * t;
        f2 += v * (t * t);
    });
    // d/domega of exp(-j omega t) brings -j t.
    let j = Complex64::new(0.0, 1.0);
    let d1 = -j * f1;
    let d2 = -f2;
    let p = f0.norm_sqr();
    let p1 = 2.0 * (f0.conj() * d1).re;
    let p2 = 2.0 * (d1.norm_sqr() + (f0.conj() * d2).re);
    (p, p1, p2)
}

impl ClassicEstimator {
    pub fn new(len: usize, opts: NewtonOptions) -> ClassicEstimator {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len * ZERO_PAD);
        ClassicEstimator { len, fft, buf: vec![Complex64::new(0.0, 0.0); len * ZERO_PAD], opts }
    }

    /// Conjugated dechirped samples: a tone at `+alpha tau`.
    pub fn dechirp(record: &ClassicRecord) -> Vec<Complex64> {
        record
            .t_grid
            .iter()
            .zip(&record.y0)
            .map(|(&t, &y)| {
                let (s, c) = lfm_phase(t, &record.waveform).sin_cos();
                y.conj() * Complex64::new(c, s)
            })
            .collect()
    }

    pub fn estimate(&mut self, record: &ClassicRecord) -> Result<ClassicEstimate> {
        let n = record.y0.len();
        if n == 0 {
            return Err(Error::EmptyRecord);
        }
        assert_eq!(n, self.len, "record length does not match the plan");
        let dt = record.symbol_duration / n as f64;
        let z = Self::dechirp(record);
        self.buf[..n].copy_from_slice(&z);
        self.buf[n..].iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        self.fft.process(&mut self.buf);
        let mags: Vec<f64> = self.buf.iter().map(|x| x.norm()).collect();
        let half = mags.len() / 2;
        let (k, _) = peak_index(&mags, 1, half);
        let bin_width = TWO_PI / (ZERO_PAD as f64 * record.symbol_duration);
        let offset = parabolic_offset(mags[k - 1], mags[k], mags[k + 1]);
        let mut omega = (k as f64 + offset) * bin_width;
        let (mut p, mut p1, mut p2) = periodogram(&z, dt, omega);
        let start = periodogram(&z, dt, k as f64 * bin_width);
        if start.0 > p {
            omega = k as f64 * bin_width;
            (p, p1, p2) = start;
        }
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..self.opts.max_iter {
            let step0 = if p2 < 0.0 { -p1 / p2 } else { p1 / p2.abs().max(1e-300) };
            let mut step = step0;
            let mut accepted = false;
            for _ in 0..=self.opts.max_backtracks {
                let cand = periodogram(&z, dt, omega + step);
                if !cand.0.is_finite() {
                    return Err(Error::NonFinite { iteration: iterations + 1, omega: omega + step, phi: 0.0, history: vec![p] });
                }
                if cand.0 - p > self.opts.rel_tol * p {
                    omega += step;
                    (p, p1, p2) = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true;
                break;
            }
            iterations += 1;
        }
        let tau_hat = omega / record.sweep_slope;
        Ok(ClassicEstimate {
            omega_hat: omega,
            tau_hat,
            range_hat: 0.5 * SPEED_OF_LIGHT * tau_hat,
            amplitude_hat: p.sqrt() / n as f64,
            iterations,
            converged,
        })
    }
}
