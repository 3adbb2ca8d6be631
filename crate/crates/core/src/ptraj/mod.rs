//! Transmit power trajectories: SNR decomposition, the closed-form
//! ITN-limited rule and the primal-dual refinement.

pub mod pds;

pub use pds::{pds_optimize, PdsOptions, PdsOutcome, PdsState};

use serde::Serialize;

use crate::constants::{ELECTRON_CHARGE, HBAR, Z0};
use crate::error::Result;
use crate::physics::{derive_constants, DerivedConstants};
use crate::scene::{detuning_trajectory, time_grid, PowerTrajectory, Provenance, SensingScene};

/// Per-sample quantities that do not depend on the transmit power.
#[derive(Debug, Clone)]
pub struct TrajectoryModel {
    pub t_grid: Vec<f64>,
    pub delta: Vec<f64>,
    pub k: DerivedConstants,
    /// `Omega_r = ref_coef * sqrt(P)`.
    pub ref_coef: f64,
    /// `|E_s|^2 = field_gain * P * h^2`.
    pub field_gain: f64,
    pub e_i_sq: f64,
    pub dipole_scale: f64,
    /// `q R_T`
    pub shot: f64,
    pub symbol_duration: f64,
    pub h: f64,
}

impl TrajectoryModel {
    /// Model on an `s_count`-point grid over the scene's symbol.
    pub fn new(scene: &SensingScene, s_count: usize) -> Result<TrajectoryModel> {
        let ch = scene.channel()?;
        let t = time_grid(s_count, scene.waveform.symbol_duration);
        let delta = detuning_trajectory(&scene.waveform, &ch, &scene.atoms, &t);
        TrajectoryModel::with_detuning(scene, t, delta)
    }

    /// Model for arbitrary detuning samples.
    pub fn with_detuning(scene: &SensingScene, t_grid: Vec<f64>, delta: Vec<f64>) -> Result<TrajectoryModel> {
        let ch = scene.channel()?;
        let atoms = &scene.atoms;
        let g = &scene.geometry;
        let dipole_scale = atoms.mu34 / HBAR;
        Ok(TrajectoryModel {
            t_grid,
            delta,
            k: derive_constants(atoms)?,
            ref_coef: dipole_scale * (2.0 * Z0 * g.g_tx_ref).sqrt() * ch.h_ref,
            field_gain: 2.0 * Z0 * g.g_tx,
            e_i_sq: scene.etn_intensity(),
            dipole_scale,
            shot: ELECTRON_CHARGE * atoms.r_load,
            symbol_duration: scene.waveform.symbol_duration,
            h: ch.h,
        })
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Power that puts the reference Rabi frequency at `omega`.
    pub fn power_for_rabi(&self, omega: f64) -> f64 {
        (omega / self.ref_coef).powi(2)
    }

    /// `env^2` at sample `s` for power `p`.
    pub fn envelope_sq(&self, s: usize, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let (w, d) = (self.ref_coef * p.sqrt(), self.delta[s]);
        let ups = self.k.upsilon_unchecked(w, d);
        let m2 = self.dipole_scale * self.dipole_scale;
        let sigma_sq = m2 * ups * ups * self.e_i_sq + self.shot * self.k.pi_unchecked(w, d);
        m2 * ups * ups * self.field_gain * p / sigma_sq
    }

    /// Analytic `d env^2 / dP`; forward difference at `P = 0`.
    pub fn envelope_sq_grad(&self, s: usize, p: f64) -> f64 {
        if p <= 0.0 {
            let step = 1e-9;
            return (self.envelope_sq(s, step) - self.envelope_sq(s, 0.0)) / step;
        }
        let d = self.delta[s];
        let sp = p.sqrt();
        let w = self.ref_coef * sp;
        let dw_dp = self.ref_coef / (2.0 * sp);
        let ups = self.k.upsilon_unchecked(w, d);
        let ups_d = self.k.upsilon_d_omega(w, d);
        let pi = self.k.pi_unchecked(w, d);
        let m2 = self.dipole_scale * self.dipole_scale;
        let sigma_sq = m2 * ups * ups * self.e_i_sq + self.shot * pi;
        let dsigma_dw = 2.0 * m2 * ups * ups_d * self.e_i_sq + self.shot * ups;
        let g = m2 * self.field_gain;
        g * (ups * ups / sigma_sq + p * dw_dp * (2.0 * ups * ups_d / sigma_sq - ups * ups * dsigma_dw / (sigma_sq * sigma_sq)))
    }

    /// `(snr_etn, snr_itn, snr_total)` at sample `s`.
    pub fn snr_parts(&self, s: usize, p: f64) -> (f64, f64, f64) {
        if p <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (w, d) = (self.ref_coef * p.sqrt(), self.delta[s]);
        let es_sq = self.field_gain * p * self.h * self.h;
        let etn = self.symbol_duration * es_sq / self.e_i_sq;
        let ups = self.k.upsilon_unchecked(w, d);
        let m2 = self.dipole_scale * self.dipole_scale;
        let itn = m2 * ups * ups * self.symbol_duration * es_sq / (self.shot * self.k.pi_unchecked(w, d));
        let total = if etn + itn > 0.0 { etn * itn / (etn + itn) } else { 0.0 };
        (etn, itn, total)
    }

    pub fn mean_envelope_sq(&self, p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(s, &x)| self.envelope_sq(s, x)).sum::<f64>() / p.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrBreakdown {
    pub snr_etn: Vec<f64>,
    pub snr_itn: Vec<f64>,
    pub snr_total: Vec<f64>,
    pub envelope_sq: Vec<f64>,
}

pub fn snr_breakdown(p: &PowerTrajectory, scene: &SensingScene) -> Result<SnrBreakdown> {
    let model = TrajectoryModel::new(scene, p.s_count())?;
    Ok(snr_breakdown_with(&model, &p.samples))
}

pub fn snr_breakdown_with(model: &TrajectoryModel, p: &[f64]) -> SnrBreakdown {
    let n = p.len();
    let mut out = SnrBreakdown {
        snr_etn: Vec::with_capacity(n),
        snr_itn: Vec::with_capacity(n),
        snr_total: Vec::with_capacity(n),
        envelope_sq: Vec::with_capacity(n),
    };
    for (s, &x) in p.iter().enumerate() {
        let (e, i, t) = model.snr_parts(s, x);
        out.snr_etn.push(e);
        out.snr_itn.push(i);
        out.snr_total.push(t);
        out.envelope_sq.push(model.envelope_sq(s, x));
    }
    out
}

/// Closed-form maximizers of `kappa`: `sqrt(k1 |delta|)` off resonance and
/// `k2` on resonance.
pub fn k_coefficients(k: &DerivedConstants) -> (f64, f64) {
    let a = k.c0 * k.b1;
    // sqrt(a^2 + 16 c1^2) - a without cancellation.
    let root = 16.0 * k.c1 * k.c1 / ((a * a + 16.0 * k.c1 * k.c1).sqrt() + a);
    let base = root / (4.0 * k.c1 * k.c1);
    ((k.c3 * base).sqrt(), (k.c2 * base).sqrt())
}

/// Detuning where the two branches of the ITN-limited rule meet.
pub fn crossover_detuning(k: &DerivedConstants) -> f64 {
    let (k1, k2) = k_coefficients(k);
    k2 * k2 / k1
}

/// ITN-limited rule on an `s_count`-point grid. The budget field is copied
/// from the scene; the rule itself ignores it, so the result may need
/// projection before use.
pub fn itn_limited_trajectory(scene: &SensingScene, s_count: usize) -> Result<PowerTrajectory> {
    let model = TrajectoryModel::new(scene, s_count)?;
    Ok(itn_limited_from_model(&model, scene.power.p_avg_budget))
}

pub fn itn_limited_from_model(model: &TrajectoryModel, p_avg_budget: f64) -> PowerTrajectory {
    let (k1, k2) = k_coefficients(&model.k);
    let cross = k2 * k2 / k1;
    let samples = model
        .delta
        .iter()
        .map(|&d| {
            let d = d.abs();
            if d <= cross { model.power_for_rabi(k2) } else { model.power_for_rabi((k1 * d).sqrt()) }
        })
        .collect();
    PowerTrajectory { samples, p_avg_budget, provenance: Provenance::ItnLimited }
}

/// `d env^2 / dP` per sample.
pub fn envelope_gradient(p: &PowerTrajectory, scene: &SensingScene) -> Result<Vec<f64>> {
    let model = TrajectoryModel::new(scene, p.s_count())?;
    Ok(p.samples.iter().enumerate().map(|(s, &x)| model.envelope_sq_grad(s, x)).collect())
}
