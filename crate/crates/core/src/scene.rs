//! Waveform, geometry and the drive trajectories seen by the atoms.

use serde::{Deserialize, Serialize};

use crate::constants::{angular, db_to_linear, BOLTZMANN, EPSILON0, HBAR, SPEED_OF_LIGHT, TWO_PI, Z0};
use crate::error::{invalid, Result};
use crate::physics::AtomicSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfmWaveform {
    pub omega0: f64,
    /// Chirp rate alpha, rad/s^2.
    pub sweep_slope: f64,
    pub symbol_duration: f64,
    /// Sweep bandwidth in Hz.
    pub bandwidth: f64,
}

impl LfmWaveform {
    pub fn new(omega0: f64, bandwidth: f64, symbol_duration: f64) -> Result<Self> {
        if !(symbol_duration > 0.0) {
            return Err(invalid("symbol_duration", "must be positive"));
        }
        if !(bandwidth > 0.0) {
            return Err(invalid("bandwidth", "must be positive"));
        }
        Ok(LfmWaveform { omega0, sweep_slope: TWO_PI * bandwidth / symbol_duration, symbol_duration, bandwidth })
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.sweep_slope * t + self.omega0
    }
}

impl Default for LfmWaveform {
    fn default() -> Self {
        LfmWaveform::new(angular(3.212e9), 150e6, 1e-3).expect("valid defaults")
    }
}

/// Transmitted phase `alpha t^2 / 2 + omega0 t`.
pub fn lfm_phase(t: f64, w: &LfmWaveform) -> f64 {
    0.5 * w.sweep_slope * t * t + w.omega0 * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub target_range: f64,
    pub tx_rx_distance: f64,
    /// Linear gains.
    pub g_tx: f64,
    pub g_tx_ref: f64,
    pub g_rx: f64,
    /// Low-noise amplifier gain of the classic receiver (linear).
    pub g_lna: f64,
    pub cross_section: f64,
    pub noise_temperature: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            target_range: 1e3,
            tx_rx_distance: 1.0,
            g_tx: db_to_linear(10.0),
            g_tx_ref: db_to_linear(-30.0),
            g_rx: db_to_linear(10.0),
            g_lna: 1.0,
            cross_section: db_to_linear(10.0),
            noise_temperature: 290.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.tx_rx_distance > 0.0) {
            return Err(invalid("tx_rx_distance", "must be positive"));
        }
        if !(self.target_range > self.tx_rx_distance) {
            return Err(invalid(
                "target_range",
                format!("target range {} m must exceed the reference distance {} m", self.target_range, self.tx_rx_distance),
            ));
        }
        for (name, v) in [
            ("g_tx", self.g_tx),
            ("g_tx_ref", self.g_tx_ref),
            ("g_rx", self.g_rx),
            ("g_lna", self.g_lna),
            ("cross_section", self.cross_section),
            ("noise_temperature", self.noise_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_range(&self, target_range: f64) -> Geometry {
        Geometry { target_range, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub tau: f64,
    pub tau_ref: f64,
    /// Roundtrip fading amplitude, 1/m.
    pub h: f64,
    pub h_ref: f64,
    pub omega_beat: f64,
    /// Beat phase, wrapped to [0, 2 pi).
    pub phi: f64,
}

impl ChannelState {
    pub fn range(&self) -> f64 {
        0.5 * SPEED_OF_LIGHT * self.tau
    }

    pub fn with_fading(&self, h: f64) -> ChannelState {
        ChannelState { h, ..*self }
    }

    pub fn with_phase(&self, phi: f64) -> ChannelState {
        ChannelState { phi: phi.rem_euclid(TWO_PI), ..*self }
    }
}

pub fn build_channel(geom: &Geometry, w: &LfmWaveform) -> Result<ChannelState> {
    geom.validate()?;
    let l = geom.target_range;
    let tau = 2.0 * l / SPEED_OF_LIGHT;
    let tau_ref = geom.tx_rx_distance / SPEED_OF_LIGHT;
    let h = (geom.cross_section / (16.0 * std::f64::consts::PI.powi(2) * l.powi(4))).sqrt();
    let h_ref = 1.0 / (4.0 * std::f64::consts::PI * geom.tx_rx_distance.powi(2)).sqrt();
    let lag = tau - tau_ref;
    let omega_beat = lag * w.sweep_slope;
    let phi = (lag * (w.omega0 - 0.5 * w.sweep_slope * (tau + tau_ref))).rem_euclid(TWO_PI);
    Ok(ChannelState { tau, tau_ref, h, h_ref, omega_beat, phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fixed,
    ItnLimited,
    PdsOptimized,
}

/// Transmit power samples on the uniform grid `t_s = s T / S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrajectory {
    pub samples: Vec<f64>,
    pub p_avg_budget: f64,
    pub provenance: Provenance,
}

impl PowerTrajectory {
    pub fn fixed(s_count: usize, p_avg: f64) -> PowerTrajectory {
        PowerTrajectory { samples: vec![p_avg; s_count], p_avg_budget: p_avg, provenance: Provenance::Fixed }
    }

    pub fn s_count(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(invalid("power", "empty trajectory"));
        }
        if let Some(i) = self.samples.iter().position(|&p| !(p >= 0.0)) {
            return Err(invalid("power", format!("sample {i} is negative or NaN ({})", self.samples[i])));
        }
        Ok(())
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.samples.iter().all(|&p| p >= 0.0) && self.mean() <= self.p_avg_budget * (1.0 + tol)
    }

    /// Clips negatives and scales down to the budget if needed.
    pub fn project(&self) -> PowerTrajectory {
        let mut samples: Vec<f64> = self.samples.iter().map(|&p| p.max(0.0)).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        if mean > self.p_avg_budget {
            let scale = self.p_avg_budget / mean;
            samples.iter_mut().for_each(|p| *p *= scale);
        }
        PowerTrajectory { samples, ..self.clone() }
    }

    /// Linear interpolation onto `s_count` samples over the same symbol.
    pub fn resample(&self, s_count: usize) -> PowerTrajectory {
        let n = self.samples.len();
        if n == s_count {
            return self.clone();
        }
        let ratio = n as f64 / s_count as f64;
        let samples = (0..s_count)
            .map(|s| {
                let x = s as f64 * ratio;
                let i = x.floor() as usize;
                if i + 1 >= n {
                    self.samples[n - 1]
                } else {
                    let f = x - i as f64;
                    self.samples[i] * (1.0 - f) + self.samples[i + 1] * f
                }
            })
            .collect();
        PowerTrajectory { samples, ..self.clone() }.project()
    }
}

pub fn time_grid(s_count: usize, symbol_duration: f64) -> Vec<f64> {
    let dt = symbol_duration / s_count as f64;
    (0..s_count).map(|s| s as f64 * dt).collect()
}

/// Reference and signal Rabi frequency per square-root watt.
pub fn rabi_coefficients(geom: &Geometry, atoms: &AtomicSystem, ch: &ChannelState) -> (f64, f64) {
    let scale = atoms.mu34 / HBAR;
    let ref_coef = scale * (2.0 * Z0 * geom.g_tx_ref * ch.h_ref * ch.h_ref).sqrt();
    let sig_coef = scale * (2.0 * Z0 * geom.g_tx * ch.h * ch.h).sqrt();
    (ref_coef, sig_coef)
}

/// Reference and signal Rabi frequencies per power sample.
pub fn rabi_trajectories(
    p: &PowerTrajectory,
    geom: &Geometry,
    atoms: &AtomicSystem,
    ch: &ChannelState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let (ref_coef, sig_coef) = rabi_coefficients(geom, atoms, ch);
    let omega_r: Vec<f64> = p.samples.iter().map(|&x| ref_coef * x.sqrt()).collect();
    let omega_s: Vec<f64> = p.samples.iter().map(|&x| sig_coef * x.sqrt()).collect();
    if sig_coef > 0.0 && ref_coef / sig_coef <= 10.0 && p.samples.iter().any(|&x| x > 0.0) {
        log::warn!("reference/signal Rabi ratio {:.3} is not above 10", ref_coef / sig_coef);
    }
    Ok((omega_r, omega_s))
}

/// RF detuning `alpha t + gamma` with `gamma = omega0 - omega34 - alpha tau'`.
pub fn detuning_trajectory(w: &LfmWaveform, ch: &ChannelState, atoms: &AtomicSystem, t_grid: &[f64]) -> Vec<f64> {
    let gamma = detuning_offset(w, ch, atoms);
    t_grid.iter().map(|&t| w.sweep_slope * t + gamma).collect()
}

pub fn detuning_offset(w: &LfmWaveform, ch: &ChannelState, atoms: &AtomicSystem) -> f64 {
    -w.sweep_slope * ch.tau_ref + w.omega0 - atoms.omega34
}

/// Mean-square blackbody plus vacuum field at the receiver, (V/m)^2.
pub fn etn_intensity(omega0: f64, t_e: f64) -> f64 {
    let vacuum = HBAR * omega0.powi(3) / (std::f64::consts::PI * EPSILON0 * SPEED_OF_LIGHT.powi(3));
    let n_th = if t_e > 0.0 { 1.0 / (HBAR * omega0 / (BOLTZMANN * t_e)).exp_m1() } else { 0.0 };
    vacuum * (2.0 * n_th + 1.0)
}

/// Everything needed to synthesize one received symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingScene {
    pub atoms: AtomicSystem,
    pub waveform: LfmWaveform,
    pub geometry: Geometry,
    pub power: PowerTrajectory,
    pub grid_s: usize,
    /// Replaces the geometric roundtrip fading when set.
    pub fading_override: Option<f64>,
}

impl SensingScene {
    pub fn new(atoms: AtomicSystem, waveform: LfmWaveform, geometry: Geometry, power: PowerTrajectory, grid_s: usize) -> Self {
        SensingScene { atoms, waveform, geometry, power, grid_s, fading_override: None }
    }

    pub fn channel(&self) -> Result<ChannelState> {
        let ch = build_channel(&self.geometry, &self.waveform)?;
        Ok(match self.fading_override {
            Some(h) => ch.with_fading(h),
            None => ch,
        })
    }

    pub fn time_grid(&self) -> Vec<f64> {
        time_grid(self.grid_s, self.waveform.symbol_duration)
    }

    pub fn dt(&self) -> f64 {
        self.waveform.symbol_duration / self.grid_s as f64
    }

    pub fn etn_intensity(&self) -> f64 {
        etn_intensity(self.waveform.omega0, self.geometry.noise_temperature)
    }

    /// Power trajectory on the synthesis grid.
    pub fn power_on_grid(&self) -> PowerTrajectory {
        self.power.resample(self.grid_s)
    }
}
