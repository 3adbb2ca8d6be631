//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use rare_core::ptraj::{itn_limited_from_model, pds_optimize, PdsOptions, TrajectoryModel};
use rare_core::scene::{Geometry, LfmWaveform, PowerTrajectory, SensingScene};
use rare_core::signal::{synthesize_with_response, ReceivedRecord, ReceiverResponse};
use rare_core::AtomicSystem;

/// Laboratory-default scene at fixed 1.5 W on `grid` samples.
pub fn scene(grid: usize) -> SensingScene {
    SensingScene::new(AtomicSystem::default(), LfmWaveform::default(), Geometry::default(), PowerTrajectory::fixed(grid, 1.5), grid)
}

/// Same scene driven by the optimized trajectory designed on `traj_grid` samples.
pub fn optimized_scene(grid: usize, traj_grid: usize) -> SensingScene {
    let mut sc = scene(grid);
    let model = TrajectoryModel::new(&sc, traj_grid).expect("default scene");
    let init = itn_limited_from_model(&model, 1.5).project();
    sc.power = pds_optimize(&init, &model, &PdsOptions::default()).expect("default scene").trajectory;
    sc
}

/// Noisy record with the echo scaled 30x above the geometric fading, which
/// puts a 1 km target comfortably above the estimator threshold.
pub fn record(sc: &SensingScene, seed: u64) -> (Arc<ReceiverResponse>, ReceivedRecord) {
    let resp = Arc::new(ReceiverResponse::from_scene(sc).expect("default scene"));
    let ch = sc.channel().expect("default scene");
    let ch = ch.with_fading(30.0 * ch.h);
    let rec = synthesize_with_response(&resp, &[ch], seed, false).expect("linear regime");
    (resp, rec)
}
