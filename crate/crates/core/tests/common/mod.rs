#![allow(dead_code)]

use std::sync::Arc;

use rare_core::constants::TWO_PI;
use rare_core::physics::AtomicSystem;
use rare_core::ptraj::{itn_limited_from_model, pds_optimize, PdsOptions, TrajectoryModel};
use rare_core::scene::{ChannelState, Geometry, LfmWaveform, PowerTrajectory, SensingScene};
use rare_core::signal::ReceiverResponse;

pub fn default_scene(grid: usize) -> SensingScene {
    SensingScene::new(
        AtomicSystem::default(),
        LfmWaveform::default(),
        Geometry::default(),
        PowerTrajectory::fixed(grid, 1.5),
        grid,
    )
}

/// Default scene driven by the PDS trajectory computed on its own grid.
pub fn optimized_scene(grid: usize) -> SensingScene {
    let mut sc = default_scene(grid);
    let model = TrajectoryModel::new(&sc, grid).unwrap();
    let init = itn_limited_from_model(&model, sc.power.p_avg_budget);
    sc.power = pds_optimize(&init, &model, &PdsOptions::default()).unwrap().trajectory;
    sc
}

/// Response whose normalized envelope is `env` at every sample.
pub fn flat_response(n: usize, symbol_duration: f64, bandwidth: f64, env: f64) -> Arc<ReceiverResponse> {
    let dt = symbol_duration / n as f64;
    Arc::new(ReceiverResponse {
        t_grid: (0..n).map(|s| s as f64 * dt).collect(),
        omega_r: vec![1e12; n],
        signal_rabi_per_h: vec![1.0; n],
        delta: vec![0.0; n],
        bias: vec![1.0; n],
        gain: vec![env; n],
        sigma_etn_sq: vec![0.5; n],
        sigma_itn_sq: vec![0.5; n],
        sigma_sq: vec![1.0; n],
        envelope: vec![env; n],
        symbol_duration,
        sweep_slope: TWO_PI * bandwidth / symbol_duration,
        bandwidth,
    })
}

/// Echo with beat `omega`, phase `phi` and fading `h` for a response.
pub fn echo(resp: &ReceiverResponse, omega: f64, phi: f64, h: f64) -> ChannelState {
    let tau_ref = 1.0 / rare_core::constants::SPEED_OF_LIGHT;
    ChannelState { tau: omega / resp.sweep_slope + tau_ref, tau_ref, h, h_ref: 1.0, omega_beat: omega, phi }
}

/// Fading that puts `mean(env^2) h^2 T` at `snr_db`.
pub fn fading_for_snr(resp: &ReceiverResponse, snr_db: f64) -> f64 {
    let mean = resp.envelope.iter().map(|e| e * e).sum::<f64>() / resp.envelope.len() as f64;
    (10f64.powf(snr_db / 10.0) / (mean * resp.symbol_duration)).sqrt()
}

pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}
