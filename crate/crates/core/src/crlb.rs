//! Fisher information for the normalized observation
//! `y_norm = h * env(t) * cos(omega t + phi) + unit-PSD noise`
//! and the resulting delay bounds.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherInfo {
    /// Parameter order `(h, omega, phi)`.
    pub matrix: [[f64; 3]; 3],
    pub rho_bar0: f64,
    pub rho_bar1: f64,
    pub rho_bar2: f64,
}

impl FisherInfo {
    pub fn as_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.matrix[i][j])
    }

    /// `[FIM^-1]_(omega, omega) / alpha^2`, infinite when singular.
    pub fn crlb_tau(&self, sweep_slope: f64) -> f64 {
        match self.as_matrix().try_inverse() {
            Some(inv) if inv[(1, 1)] > 0.0 => inv[(1, 1)] / (sweep_slope * sweep_slope),
            _ => f64::INFINITY,
        }
    }
}

/// `(int env^2, int env^2 t, int env^2 t^2)` as Riemann sums on `t_s = s dt`.
pub fn envelope_moments(envelope: &[f64], dt: f64) -> (f64, f64, f64) {
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (s, &r) in envelope.iter().enumerate() {
        let t = s as f64 * dt;
        let w = r * r;
        m0 += w;
        m1 += w * t;
        m2 += w * t * t;
    }
    (m0 * dt, m1 * dt, m2 * dt)
}

/// Exact Fisher matrix with the oscillating terms kept.
pub fn fim_exact(h: f64, omega: f64, phi: f64, envelope: &[f64], dt: f64) -> FisherInfo {
    let mut a = [0.0f64; 6];
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    crate::estimator::for_each_phasor(envelope.len(), dt, omega, phi, |s, c, sn| {
        let t = s as f64 * dt;
        let w = envelope[s] * envelope[s];
        let (cc, ss, sc) = (c * c, sn * sn, sn * c);
        a[0] += w * cc;
        a[1] += w * t * sc;
        a[2] += w * sc;
        a[3] += w * t * t * ss;
        a[4] += w * t * ss;
        a[5] += w * ss;
        m0 += w;
        m1 += w * t;
        m2 += w * t * t;
    });
    let a = a.map(|x| x * dt);
    let hh = a[0];
    let hw = -h * a[1];
    let hp = -h * a[2];
    let ww = h * h * a[3];
    let wp = h * h * a[4];
    let pp = h * h * a[5];
    FisherInfo {
        matrix: [[hh, hw, hp], [hw, ww, wp], [hp, wp, pp]],
        rho_bar0: m0 * dt,
        rho_bar1: m1 * dt,
        rho_bar2: m2 * dt,
    }
}

/// Large-`omega` delay bound from the three envelope moments. Returns
/// infinity when the envelope carries no timing information.
pub fn crlb_tau_asymptotic(envelope: &[f64], h: f64, sweep_slope: f64, dt: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("h", format!("fading must be positive, got {h}")));
    }
    let (m0, m1, m2) = envelope_moments(envelope, dt);
    Ok(crlb_from_moments(m0, m1, m2, h, sweep_slope))
}

pub fn crlb_from_moments(m0: f64, m1: f64, m2: f64, h: f64, sweep_slope: f64) -> f64 {
    let spread = m0 * m2 - m1 * m1;
    if !(m0 > 0.0) || !(spread > 1e-12 * m0 * m2) {
        return f64::INFINITY;
    }
    2.0 * m0 / (sweep_slope * sweep_slope * h * h * spread)
}

/// Delay bound of the classic receiver: a constant-modulus complex tone of
/// amplitude `amplitude` in complex white noise of density `sigma0_sq`.
pub fn crlb_tau_classic(amplitude: f64, sigma0_sq: f64, sweep_slope: f64, symbol_duration: f64) -> f64 {
    6.0 * sigma0_sq / (sweep_slope * sweep_slope * amplitude * amplitude * symbol_duration.powi(3))
}
