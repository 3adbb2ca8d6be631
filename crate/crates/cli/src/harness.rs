//! Seeded Monte Carlo sweeps over the experiment configuration.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rare_core::crlb::{crlb_tau_asymptotic, crlb_tau_classic};
use rare_core::estimator::classic::ClassicEstimator;
use rare_core::estimator::{NewtonOptions, RangeEstimator};
use rare_core::ptraj::{itn_limited_from_model, pds_optimize, PdsOptions, TrajectoryModel};
use rare_core::scene::{build_channel, LfmWaveform, PowerTrajectory, SensingScene};
use rare_core::signal::{fading_for_received_snr, synthesize_classic_opt, synthesize_with_response, ReceiverResponse};

use crate::config::{ConfigError, ExperimentConfig, RangeMode, SweepVariable, TrajectoryMode};

/// Stream tag mixed into the base seed for range draws, so they never share
/// a generator state with the noise of trial 0.
const RANGE_STREAM: u64 = 0x5241_4e47_455f_4c44;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Model(#[from] rare_core::Error),

    #[error(
        "sweep value {sweep_value}: {skipped} of {trials} trials skipped (limit 10%); first failure at seed {seed}: {reason}"
    )]
    TooManySkips { sweep_value: f64, skipped: usize, trials: usize, seed: u64, reason: String },

    #[error("no rows to emit")]
    NoRows,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub rmse_tau: f64,
    /// Square root of the trial-averaged delay bound, s.
    pub crlb_tau: f64,
    pub mean_iterations: f64,
    pub trials_used: usize,
    pub trajectory_mode: TrajectoryMode,
}

/// Target range of every trial, in trial order.
pub fn trial_ranges(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = cfg.trials;
    let (lo, hi) = (cfg.range_min, cfg.range_max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ RANGE_STREAM);
    match cfg.range_mode {
        RangeMode::Fixed => vec![cfg.geometry.target_range; n],
        RangeMode::Uniform => (0..n).map(|_| rng.random_range(lo..=hi)).collect(),
        RangeMode::Ladder => {
            let offset: f64 = rng.random();
            let mut ladder: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * (i as f64 + offset) / n as f64).collect();
            ladder.shuffle(&mut rng);
            ladder
        }
    }
}

/// Scene at one sweep point, carrying a fixed trajectory at the point's
/// power budget.
pub fn point_scene(cfg: &ExperimentConfig, value: f64) -> Result<SensingScene> {
    let (mut waveform, mut geometry, mut p_avg) = (cfg.waveform, cfg.geometry, cfg.p_avg);
    match cfg.sweep.variable {
        SweepVariable::Snr => {}
        SweepVariable::PAvg => p_avg = value,
        SweepVariable::Bandwidth => waveform = LfmWaveform::new(waveform.omega0, value, waveform.symbol_duration)?,
        SweepVariable::Range => geometry.target_range = value,
    }
    Ok(SensingScene::new(cfg.atoms, waveform, geometry, PowerTrajectory::fixed(cfg.trajectory_grid, p_avg), cfg.grid_s))
}

/// Transmit power trajectory for `mode` on a `grid`-point grid.
pub fn design_trajectory(mode: TrajectoryMode, scene: &SensingScene, grid: usize) -> Result<PowerTrajectory> {
    let budget = scene.power.p_avg_budget;
    Ok(match mode {
        TrajectoryMode::Classic | TrajectoryMode::Fixed => PowerTrajectory::fixed(grid, budget),
        TrajectoryMode::ItnLimited => {
            let model = TrajectoryModel::new(scene, grid)?;
            itn_limited_from_model(&model, budget).project()
        }
        TrajectoryMode::Pds => {
            let model = TrajectoryModel::new(scene, grid)?;
            let init = itn_limited_from_model(&model, budget).project();
            let out = pds_optimize(&init, &model, &PdsOptions::default())?;
            log::debug!("pds: {} iterations, objective {:e} from {:e}", out.iterations, out.objective, out.initial_objective);
            out.trajectory
        }
    })
}

struct Outcome {
    error: f64,
    crlb: f64,
    iterations: usize,
}

enum Worker {
    Heterodyne(RangeEstimator),
    Classic(ClassicEstimator),
}

/// Shared, per-point state for the trials.
struct Point {
    scene: SensingScene,
    response: Option<Arc<ReceiverResponse>>,
    fading: Option<f64>,
}

impl Point {
    fn trial(&self, worker: &mut Worker, seed: u64, range: f64, noiseless: bool) -> rare_core::Result<Outcome> {
        let geometry = self.scene.geometry.with_range(range);
        match (worker, &self.response) {
            (Worker::Heterodyne(est), Some(resp)) => {
                let mut ch = build_channel(&geometry, &self.scene.waveform)?;
                if let Some(h) = self.fading {
                    ch = ch.with_fading(h);
                }
                let rec = synthesize_with_response(resp, &[ch], seed, noiseless)?;
                let e = est.estimate(&rec)?;
                let crlb = crlb_tau_asymptotic(&resp.envelope, ch.h, resp.sweep_slope, resp.dt())?;
                Ok(Outcome { error: e.tau_hat - ch.tau, crlb, iterations: e.iterations })
            }
            (Worker::Classic(est), _) => {
                let mut scene = self.scene.clone();
                scene.geometry = geometry;
                scene.fading_override = self.fading;
                let rec = synthesize_classic_opt(&scene, seed, noiseless)?;
                let e = est.estimate(&rec)?;
                let crlb = crlb_tau_classic(rec.amplitude, rec.sigma0_sq, rec.sweep_slope, rec.symbol_duration);
                Ok(Outcome { error: e.tau_hat - rec.truth.tau, crlb, iterations: e.iterations })
            }
            (Worker::Heterodyne(_), None) => unreachable!("heterodyne point without a response"),
        }
    }
}

/// Runs one sweep point. `trajectory` must already be designed for it.
fn run_point(cfg: &ExperimentConfig, value: f64, trajectory: &PowerTrajectory, ranges: &[f64]) -> Result<ResultRow> {
    let mut scene = point_scene(cfg, value)?;
    scene.power = trajectory.clone();
    let mode = cfg.trajectory_mode;
    let fading = match cfg.sweep.variable {
        SweepVariable::Snr => Some(fading_for_received_snr(&scene, 10f64.powf(value / 10.0), scene.power.p_avg_budget)),
        _ => None,
    };
    let response = match mode {
        TrajectoryMode::Classic => None,
        _ => Some(Arc::new(ReceiverResponse::from_scene(&scene)?)),
    };
    let point = Point { scene, response, fading };
    let grid = cfg.grid_s;
    let opts = NewtonOptions::default();

    let outcomes: Vec<rare_core::Result<Outcome>> = (0..cfg.trials)
        .into_par_iter()
        .map_init(
            || match mode {
                TrajectoryMode::Classic => Worker::Classic(ClassicEstimator::new(grid, opts)),
                _ => Worker::Heterodyne(RangeEstimator::new(grid, opts)),
            },
            |worker, i| point.trial(worker, cfg.seed.wrapping_add(i as u64), ranges[i], cfg.noiseless),
        )
        .collect();

    let mut first_failure = None;
    let (mut sq, mut crlb, mut iters, mut used) = (0.0, 0.0, 0usize, 0usize);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                sq += o.error * o.error;
                crlb += o.crlb;
                iters += o.iterations;
                used += 1;
            }
            Err(e) => {
                log::debug!("sweep value {value}: trial {i} skipped: {e}");
                first_failure.get_or_insert((cfg.seed.wrapping_add(i as u64), e.to_string()));
            }
        }
    }
    let skipped = cfg.trials - used;
    if skipped * 10 > cfg.trials || used == 0 {
        let (seed, reason) = first_failure.expect("some trial failed");
        return Err(HarnessError::TooManySkips { sweep_value: value, skipped, trials: cfg.trials, seed, reason });
    }
    if skipped > 0 {
        log::warn!("sweep value {value}: {skipped} of {} trials skipped", cfg.trials);
    }
    let n = used as f64;
    Ok(ResultRow {
        sweep_value: value,
        rmse_tau: (sq / n).sqrt(),
        crlb_tau: (crlb / n).sqrt(),
        mean_iterations: iters as f64 / n,
        trials_used: used,
        trajectory_mode: mode,
    })
}

/// One row per sweep value, in sweep order. Deterministic for a given
/// config regardless of thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.check()?;
    let ranges: Vec<f64> = match cfg.sweep.variable {
        SweepVariable::Range => Vec::new(),
        _ => trial_ranges(cfg),
    };
    // The trajectory ignores the target, so only power and bandwidth sweeps
    // need a fresh design per point.
    let shared = matches!(cfg.sweep.variable, SweepVariable::Snr | SweepVariable::Range);
    let mut cached: Option<PowerTrajectory> = None;
    let mut rows = Vec::with_capacity(cfg.sweep.values.len());
    for &value in &cfg.sweep.values {
        let trajectory = match (&cached, shared) {
            (Some(t), true) => t.clone(),
            _ => {
                let scene = point_scene(cfg, value)?;
                let t = design_trajectory(cfg.trajectory_mode, &scene, cfg.trajectory_grid)?;
                if shared {
                    cached = Some(t.clone());
                }
                t
            }
        };
        let point_ranges = match cfg.sweep.variable {
            SweepVariable::Range => vec![value; cfg.trials],
            _ => ranges.clone(),
        };
        let row = run_point(cfg, value, &trajectory, &point_ranges)?;
        log::info!(
            "{} {}: rmse {:.4e} s, crlb {:.4e} s, {} trials",
            row.trajectory_mode,
            value,
            row.rmse_tau,
            row.crlb_tau,
            row.trials_used
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Counts adjacent increases of RMSE along a sweep ordered by rising SNR.
pub fn rmse_inversions(rows: &[ResultRow]) -> usize {
    rows.windows(2).filter(|w| w[1].rmse_tau > w[0].rmse_tau).count()
}

/// Standard error of an RMSE estimated from `n` roughly Gaussian errors,
/// relative to the RMSE itself.
pub fn rmse_rel_stderr(n: usize) -> f64 {
    1.0 / (2.0 * n as f64).sqrt()
}

/// True when the bound sits below the RMSE at the top `top` points, within
/// three standard errors of the RMSE estimate.
pub fn crlb_floors_rmse(rows: &[ResultRow], top: usize) -> bool {
    rows.iter().rev().take(top).all(|r| r.crlb_tau <= r.rmse_tau * (1.0 + 3.0 * rmse_rel_stderr(r.trials_used)))
}
