//! Received-voltage synthesis for the self-heterodyne receiver and the
//! classic heterodyne baseline.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::constants::{BOLTZMANN, ELECTRON_CHARGE, HBAR, SPEED_OF_LIGHT, TWO_PI, Z0};
use crate::error::{Error, Result};
use crate::physics::{derive_constants, AtomicSystem, DerivedConstants};
use crate::scene::{detuning_trajectory, lfm_phase, rabi_coefficients, ChannelState, LfmWaveform, SensingScene};

/// Noise densities `(etn, itn, total)` in V^2 s at one operating point.
pub fn noise_psd(omega_r: f64, delta: f64, atoms: &AtomicSystem, k: &DerivedConstants, e_i_sq: f64) -> (f64, f64, f64) {
    let ups = k.upsilon_unchecked(omega_r, delta);
    let scale = atoms.mu34 / HBAR;
    let etn = scale * scale * ups * ups * e_i_sq;
    let itn = ELECTRON_CHARGE * atoms.r_load * k.pi_unchecked(omega_r, delta);
    (etn, itn, etn + itn)
}

/// Deterministic, noise-free part of the receiver for one scene: bias, gain,
/// envelope and noise densities on the synthesis grid. Shared by every trial
/// of a Monte Carlo point.
#[derive(Debug, Clone)]
pub struct ReceiverResponse {
    pub t_grid: Vec<f64>,
    pub omega_r: Vec<f64>,
    /// Signal Rabi frequency per unit roundtrip fading.
    pub signal_rabi_per_h: Vec<f64>,
    pub delta: Vec<f64>,
    pub bias: Vec<f64>,
    pub gain: Vec<f64>,
    pub sigma_etn_sq: Vec<f64>,
    pub sigma_itn_sq: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    /// Normalized amplitude envelope; negative because the gain is.
    pub envelope: Vec<f64>,
    pub symbol_duration: f64,
    pub sweep_slope: f64,
    pub bandwidth: f64,
}

impl ReceiverResponse {
    pub fn from_scene(scene: &SensingScene) -> Result<ReceiverResponse> {
        let ch = scene.channel()?;
        let power = scene.power_on_grid();
        let t = scene.time_grid();
        power.validate()?;
        // Signal Rabi frequencies at unit fading; the linearization check
        // happens per record, once the fading is known.
        let (ref_coef, sig_coef) = rabi_coefficients(&scene.geometry, &scene.atoms, &ch.with_fading(1.0));
        let omega_r = power.samples.iter().map(|&x| ref_coef * x.sqrt()).collect();
        let omega_s_unit = power.samples.iter().map(|&x| sig_coef * x.sqrt()).collect();
        let delta = detuning_trajectory(&scene.waveform, &ch, &scene.atoms, &t);
        ReceiverResponse::from_trajectories(
            &scene.atoms,
            &scene.waveform,
            t,
            omega_r,
            omega_s_unit,
            delta,
            scene.etn_intensity(),
        )
    }

    /// Builds the response from explicit drive trajectories.
    pub fn from_trajectories(
        atoms: &AtomicSystem,
        w: &LfmWaveform,
        t_grid: Vec<f64>,
        omega_r: Vec<f64>,
        signal_rabi_per_h: Vec<f64>,
        delta: Vec<f64>,
        e_i_sq: f64,
    ) -> Result<ReceiverResponse> {
        let k = derive_constants(atoms)?;
        let n = t_grid.len();
        if n == 0 || omega_r.len() != n || signal_rabi_per_h.len() != n || delta.len() != n {
            return Err(Error::EmptyRecord);
        }
        let mut bias = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        let mut etn = Vec::with_capacity(n);
        let mut itn = Vec::with_capacity(n);
        let mut tot = Vec::with_capacity(n);
        let mut env = Vec::with_capacity(n);
        for i in 0..n {
            let (wr, d) = (omega_r[i], delta[i]);
            let ups = k.upsilon_unchecked(wr, d);
            let (e, it, s) = noise_psd(wr, d, atoms, &k, e_i_sq);
            bias.push(k.pi_unchecked(wr, d));
            gain.push(ups);
            etn.push(e);
            itn.push(it);
            tot.push(s);
            env.push(ups * signal_rabi_per_h[i] / s.sqrt());
        }
        Ok(ReceiverResponse {
            t_grid,
            omega_r,
            signal_rabi_per_h,
            delta,
            bias,
            gain,
            sigma_etn_sq: etn,
            sigma_itn_sq: itn,
            sigma_sq: tot,
            envelope: env,
            symbol_duration: w.symbol_duration,
            sweep_slope: w.sweep_slope,
            bandwidth: w.bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.symbol_duration / self.len() as f64
    }

    /// Smallest reference/signal Rabi ratio over samples with nonzero drive.
    pub fn min_rabi_ratio(&self, h_total: f64) -> Option<(usize, f64)> {
        let mut worst: Option<(usize, f64)> = None;
        for (i, (&r, &s)) in self.omega_r.iter().zip(&self.signal_rabi_per_h).enumerate() {
            let s = s * h_total;
            if r == 0.0 && s == 0.0 {
                continue;
            }
            let ratio = if s == 0.0 { f64::INFINITY } else { r / s };
            if worst.is_none_or(|(_, w)| ratio < w) {
                worst = Some((i, ratio));
            }
        }
        worst
    }

    /// Noise-free oscillating part of `y` for the given echoes.
    fn signal_at(&self, i: usize, targets: &[ChannelState]) -> f64 {
        let t = self.t_grid[i];
        let mut acc = 0.0;
        for ch in targets {
            acc += ch.h * (ch.omega_beat * t + ch.phi).cos();
        }
        self.gain[i] * self.signal_rabi_per_h[i] * acc
    }
}

#[derive(Debug, Clone)]
pub struct ReceivedRecord {
    pub response: Arc<ReceiverResponse>,
    pub y: Vec<f64>,
    pub y_norm: Vec<f64>,
    pub seed: u64,
    pub truth: ChannelState,
    pub targets: Vec<ChannelState>,
}

impl ReceivedRecord {
    pub fn t_grid(&self) -> &[f64] {
        &self.response.t_grid
    }
    pub fn envelope(&self) -> &[f64] {
        &self.response.envelope
    }
    pub fn sigma_sq(&self) -> &[f64] {
        &self.response.sigma_sq
    }
    pub fn sigma_etn_sq(&self) -> &[f64] {
        &self.response.sigma_etn_sq
    }
    pub fn sigma_itn_sq(&self) -> &[f64] {
        &self.response.sigma_itn_sq
    }
    pub fn dt(&self) -> f64 {
        self.response.dt()
    }
    pub fn len(&self) -> usize {
        self.y_norm.len()
    }
    pub fn is_empty(&self) -> bool {
        self.y_norm.is_empty()
    }
    pub fn sweep_slope(&self) -> f64 {
        self.response.sweep_slope
    }
    pub fn tau_ref(&self) -> f64 {
        self.truth.tau_ref
    }

    /// Same record with the normalized samples replaced.
    pub fn with_y_norm(&self, y_norm: Vec<f64>) -> ReceivedRecord {
        ReceivedRecord { y_norm, ..self.clone() }
    }
}

/// Builds a record from a precomputed response. `noiseless` suppresses the
/// noise draw but keeps the seed for bookkeeping.
pub fn synthesize_with_response(
    response: &Arc<ReceiverResponse>,
    targets: &[ChannelState],
    seed: u64,
    noiseless: bool,
) -> Result<ReceivedRecord> {
    let first = *targets.first().ok_or(Error::EmptyRecord)?;
    let h_total: f64 = targets.iter().map(|c| c.h.abs()).sum();
    if let Some((sample, ratio)) = response.min_rabi_ratio(h_total) {
        if ratio <= 10.0 {
            return Err(Error::Linearization { sample, ratio });
        }
    }
    let n = response.len();
    let noise_scale = (n as f64 / response.symbol_duration).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    let mut y_norm = Vec::with_capacity(n);
    for i in 0..n {
        let sigma = response.sigma_sq[i].sqrt();
        let z: f64 = if noiseless { 0.0 } else { StandardNormal.sample(&mut rng) };
        let fluct = response.signal_at(i, targets) + sigma * noise_scale * z;
        y.push(response.bias[i] + fluct);
        y_norm.push(fluct / sigma);
    }
    Ok(ReceivedRecord { response: Arc::clone(response), y, y_norm, seed, truth: first, targets: targets.to_vec() })
}

pub fn synthesize_selfheterodyne(scene: &SensingScene, seed: u64) -> Result<ReceivedRecord> {
    let ch = scene.channel()?;
    let response = Arc::new(ReceiverResponse::from_scene(scene)?);
    synthesize_with_response(&response, &[ch], seed, false)
}

/// Instantaneous bandwidth of the self-heterodyne beat, Hz.
pub fn instantaneous_bandwidth(ch: &ChannelState, w: &LfmWaveform) -> f64 {
    (ch.tau - ch.tau_ref) * w.bandwidth / w.symbol_duration
}

#[derive(Serialize)]
struct RecordRow {
    t: f64,
    y_norm: f64,
    envelope: f64,
    sigma_sq: f64,
}

pub fn write_record_csv(record: &ReceivedRecord, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for i in 0..record.len() {
        wtr.serialize(RecordRow {
            t: record.t_grid()[i],
            y_norm: record.y_norm[i],
            envelope: record.envelope()[i],
            sigma_sq: record.sigma_sq()[i],
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Complex baseband record of the classic heterodyne receiver.
#[derive(Debug, Clone)]
pub struct ClassicRecord {
    pub t_grid: Vec<f64>,
    pub y0: Vec<Complex64>,
    /// Per-second SNR density; multiply by the symbol duration for the
    /// received SNR.
    pub snr0: f64,
    /// Echo amplitude `sqrt(P G0 A_e) h`.
    pub amplitude: f64,
    pub sigma0_sq: f64,
    pub symbol_duration: f64,
    pub sweep_slope: f64,
    pub waveform: LfmWaveform,
    pub seed: u64,
    pub truth: ChannelState,
}

/// Effective aperture of the classic receive antenna at the carrier.
pub fn classic_aperture(geom_g_rx: f64, omega0: f64) -> f64 {
    let lambda = TWO_PI * SPEED_OF_LIGHT / omega0;
    geom_g_rx * lambda * lambda / (4.0 * std::f64::consts::PI)
}

pub fn classic_snr0(p_tx: f64, g0: f64, a_e: f64, h: f64, sigma0_sq: f64) -> f64 {
    p_tx * g0 * a_e * h * h / sigma0_sq
}

pub fn synthesize_classic(scene: &SensingScene, seed: u64) -> Result<ClassicRecord> {
    synthesize_classic_opt(scene, seed, false)
}

pub fn synthesize_classic_opt(scene: &SensingScene, seed: u64, noiseless: bool) -> Result<ClassicRecord> {
    let ch = scene.channel()?;
    let g = &scene.geometry;
    let w = &scene.waveform;
    let p = scene.power.mean();
    let g0 = g.g_tx * g.g_rx * g.g_lna;
    let a_e = classic_aperture(g.g_rx, w.omega0);
    let sigma0_sq = BOLTZMANN * g.noise_temperature;
    let amplitude = (p * g0 * a_e).sqrt() * ch.h;
    let snr0 = classic_snr0(p, g0, a_e, ch.h, sigma0_sq);
    let t_grid = scene.time_grid();
    let n = t_grid.len();
    let comp_std = (sigma0_sq * n as f64 / (2.0 * w.symbol_duration)).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let y0 = t_grid
        .iter()
        .map(|&t| {
            let (s, c) = lfm_phase(t - ch.tau, w).sin_cos();
            let (nr, ni): (f64, f64) = if noiseless {
                (0.0, 0.0)
            } else {
                (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            };
            Complex64::new(amplitude * c + comp_std * nr, amplitude * s + comp_std * ni)
        })
        .collect();
    Ok(ClassicRecord {
        t_grid,
        y0,
        snr0,
        amplitude,
        sigma0_sq,
        symbol_duration: w.symbol_duration,
        sweep_slope: w.sweep_slope,
        waveform: *w,
        seed,
        truth: ch,
    })
}

/// Signal-to-noise density of the classic receiver for a scene.
pub fn classic_snr_for(scene: &SensingScene) -> Result<f64> {
    let ch = scene.channel()?;
    let g = &scene.geometry;
    let g0 = g.g_tx * g.g_rx * g.g_lna;
    let a_e = classic_aperture(g.g_rx, scene.waveform.omega0);
    Ok(classic_snr0(scene.power.mean(), g0, a_e, ch.h, BOLTZMANN * g.noise_temperature))
}

/// Roundtrip fading that gives the classic receiver a received SNR
/// `snr0 * T` equal to `received_snr` (linear) at average power `p_avg`.
pub fn fading_for_received_snr(scene: &SensingScene, received_snr: f64, p_avg: f64) -> f64 {
    let g = &scene.geometry;
    let g0 = g.g_tx * g.g_rx * g.g_lna;
    let a_e = classic_aperture(g.g_rx, scene.waveform.omega0);
    let sigma0_sq = BOLTZMANN * g.noise_temperature;
    (received_snr * sigma0_sq / (p_avg * g0 * a_e * scene.waveform.symbol_duration)).sqrt()
}

/// Free-space field magnitude factor `sqrt(2 Z0 P G)`.
pub fn field_factor(p: f64, gain: f64) -> f64 {
    (2.0 * Z0 * p * gain).sqrt()
}
