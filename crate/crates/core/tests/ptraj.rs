mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;

use common::default_scene;
use rare_core::constants::{angular, TWO_PI};
use rare_core::physics::{derive_constants, kappa, AtomicSystem, DerivedConstants};
use rare_core::ptraj::{
    crossover_detuning, envelope_gradient, itn_limited_from_model, itn_limited_trajectory, k_coefficients,
    pds_optimize, snr_breakdown, snr_breakdown_with, PdsOptions, TrajectoryModel,
};
use rare_core::scene::{LfmWaveform, PowerTrajectory, Provenance};
use rare_core::Error;

fn default_constants() -> DerivedConstants {
    derive_constants(&AtomicSystem::default()).unwrap()
}

/// Log-grid argmax of kappa over four decades around `centre`, polished by a
/// golden-section search between the neighbouring grid points.
fn grid_argmax(k: &DerivedConstants, delta: f64, centre: f64) -> f64 {
    let (lo, hi) = (centre * 1e-2, centre * 1e2);
    let n = 4000 * 4;
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let coarse = (0..n)
        .map(|i| lo * ratio.powi(i as i32))
        .map(|w| (w, kappa(w, delta, k).unwrap()))
        .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
        .0;
    let f = |w: f64| kappa(w, delta, k).unwrap();
    let (mut a, mut b) = (coarse / ratio, coarse * ratio);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[test]
fn breakdown_structure() {
    let sc = default_scene(512);
    let p = PowerTrajectory::fixed(512, 1.5);
    let b = snr_breakdown(&p, &sc).unwrap();
    for i in 0..512 {
        let (e, t, tot) = (b.snr_etn[i], b.snr_itn[i], b.snr_total[i]);
        assert_relative_eq!(tot, e * t / (e + t), max_relative = 1e-12);
        assert!(tot <= e.min(t) * (1.0 + 1e-12));
        let h = sc.channel().unwrap().h;
        assert_relative_eq!(tot, b.envelope_sq[i] * h * h * sc.waveform.symbol_duration, max_relative = 1e-9);
    }
    let zero = snr_breakdown(&PowerTrajectory::fixed(512, 0.0), &sc).unwrap();
    assert!(zero.snr_total.iter().chain(&zero.snr_etn).chain(&zero.snr_itn).all(|&x| x == 0.0));

    let mut model = TrajectoryModel::new(&sc, 512).unwrap();
    model.e_i_sq *= 1e-12;
    let quiet = snr_breakdown_with(&model, &p.samples);
    for i in 0..512 {
        assert_relative_eq!(quiet.snr_total[i], quiet.snr_itn[i], max_relative = 1e-6);
    }
}

#[test]
fn fixed_power_landscape_has_deep_dip() {
    let sc = default_scene(16);
    let n = 3001;
    let half = std::f64::consts::PI * sc.waveform.bandwidth;
    let delta: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let t = vec![0.0; n];
    let model = TrajectoryModel::with_detuning(&sc, t, delta.clone()).unwrap();
    let b = snr_breakdown_with(&model, &vec![2.0; n]);
    let best = b.snr_total.iter().cloned().fold(f64::MIN, f64::max);
    let worst_in_band = delta
        .iter()
        .zip(&b.snr_total)
        .filter(|(d, _)| **d >= angular(-60e6) && **d <= 0.0)
        .map(|(_, s)| *s)
        .fold(f64::MAX, f64::min);
    let dip = db(best) - db(worst_in_band);
    assert!(dip > 50.0, "dip {dip} dB");
}

#[test]
fn closed_form_coefficients_limit() {
    let mut k = default_constants();
    k.c0 = 1e-30;
    let (k1, k2) = k_coefficients(&k);
    assert_relative_eq!(k1, (k.c3 / k.c1).sqrt(), max_relative = 1e-9);
    assert_relative_eq!(k2, (k.c2 / k.c1).sqrt(), max_relative = 1e-9);
    let (k1, k2) = k_coefficients(&default_constants());
    assert!(k1 > 0.0 && k2 > 0.0 && (k2 / k1).is_finite());
}

#[test]
fn closed_form_maximizers_on_grid() {
    let k = default_constants();
    let (k1, k2) = k_coefficients(&k);
    let on = grid_argmax(&k, 0.0, k2);
    assert!((on - k2).abs() / k2 < 0.01);
    let d = 1e4 * k2;
    let target = (k1 * d).sqrt();
    assert!((grid_argmax(&k, d, target) - target).abs() / target < 0.05);

    let cross = crossover_detuning(&k);
    let mut last = f64::INFINITY;
    for c in [1e2, 1e3, 1e4] {
        let d = c * cross;
        let target = (k1 * d).sqrt();
        let gap = (grid_argmax(&k, d, target) - target).abs() / target;
        assert!(gap < 0.05, "c {c}: gap {gap}");
        assert!(gap < last, "c {c}: gap {gap} not below {last}");
        last = gap;
    }
}

#[test]
fn branches_meet_at_crossover() {
    let sc = default_scene(16);
    let k = derive_constants(&sc.atoms).unwrap();
    let (k1, k2) = k_coefficients(&k);
    let cross = crossover_detuning(&k);
    let model = TrajectoryModel::with_detuning(&sc, vec![0.0], vec![cross]).unwrap();
    let flat = model.power_for_rabi(k2);
    let linear = model.power_for_rabi((k1 * cross).sqrt());
    assert_relative_eq!(flat, linear, max_relative = 1e-9);
}

#[test]
fn narrow_sweep_gives_constant_rule() {
    let mut sc = default_scene(256);
    let k = derive_constants(&sc.atoms).unwrap();
    let cross = crossover_detuning(&k);
    // Whole sweep inside the flat branch.
    let b_hz = 0.5 * cross / TWO_PI;
    sc.waveform = LfmWaveform::new(sc.atoms.omega34 - angular(0.25 * b_hz), b_hz, 1e-3).unwrap();
    let p = itn_limited_trajectory(&sc, 256).unwrap();
    assert_eq!(p.provenance, Provenance::ItnLimited);
    assert!(p.samples.iter().all(|&x| x == p.samples[0]));
}

#[test]
fn itn_rule_is_near_per_sample_optimum() {
    let sc = default_scene(1024);
    let model = TrajectoryModel::new(&sc, 1024).unwrap();
    let p = itn_limited_from_model(&model, 1.5);
    let cross = crossover_detuning(&model.k);
    let grid: Vec<f64> = (0..6000).map(|i| 1e-6 * (1e8f64).powf(i as f64 / 5999.0)).collect();
    let mut checked = 0;
    for s in 0..model.len() {
        if model.delta[s].abs() < 10.0 * cross {
            continue;
        }
        let best = grid.iter().map(|&q| model.snr_parts(s, q).1).fold(0.0, f64::max);
        let got = model.snr_parts(s, p.samples[s]).1;
        assert!(got >= 0.95 * best, "sample {s}: {got:e} vs {best:e}");
        checked += 1;
    }
    assert!(checked > 500);
}

#[test]
fn pds_improves_and_is_stationary() {
    let sc = default_scene(2048);
    let model = TrajectoryModel::new(&sc, 2048).unwrap();
    let itn = itn_limited_from_model(&model, 1.5);
    let fixed = PowerTrajectory::fixed(2048, 1.5);
    let opts = PdsOptions::default();
    let out = pds_optimize(&itn, &model, &opts).unwrap();
    let p = &out.trajectory;
    assert_eq!(p.provenance, Provenance::PdsOptimized);
    assert!(p.samples.iter().all(|&x| x >= 0.0));
    assert!(p.mean() <= 1.5 * (1.0 + 1e-6));
    assert!((p.mean() - 1.5).abs() / 1.5 < 0.01);
    assert!(out.objective >= model.mean_envelope_sq(&itn.project().samples));
    assert!(out.objective >= model.mean_envelope_sq(&fixed.samples));
    assert_relative_eq!(out.objective, model.mean_envelope_sq(&p.samples), max_relative = 1e-12);

    let again = pds_optimize(p, &model, &opts).unwrap();
    assert!((again.objective - out.objective).abs() / out.objective < 1e-6);

    let from_fixed = pds_optimize(&fixed, &model, &opts).unwrap();
    assert!(from_fixed.objective >= model.mean_envelope_sq(&fixed.samples));
    assert!(from_fixed.trajectory.is_feasible(1e-6));
    assert!(out.state.beta > 0.0 && out.state.step > 0.0);
}

#[test]
fn pds_rejects_bad_input() {
    let sc = default_scene(64);
    let model = TrajectoryModel::new(&sc, 64).unwrap();
    let empty = PowerTrajectory { samples: vec![], p_avg_budget: 1.0, provenance: Provenance::Fixed };
    assert!(matches!(pds_optimize(&empty, &model, &PdsOptions::default()), Err(Error::EmptyRecord)));
    let short = PowerTrajectory::fixed(32, 1.0);
    assert!(pds_optimize(&short, &model, &PdsOptions::default()).is_err());
    let nan = PowerTrajectory { samples: vec![f64::NAN; 64], p_avg_budget: 1.0, provenance: Provenance::Fixed };
    assert!(pds_optimize(&nan, &model, &PdsOptions::default()).is_err());
}

#[test]
fn gradient_matches_differences() {
    let sc = default_scene(256);
    let model = TrajectoryModel::new(&sc, 256).unwrap();
    let p = PowerTrajectory { samples: (0..256).map(|i| 0.05 + 0.02 * i as f64).collect(), ..PowerTrajectory::fixed(256, 1.5) };
    let g = envelope_gradient(&p, &sc).unwrap();
    for s in (0..256).step_by(7) {
        let x = p.samples[s];
        let step = 1e-5 * x;
        let fd = (model.envelope_sq(s, x + step) - model.envelope_sq(s, x - step)) / (2.0 * step);
        assert_relative_eq!(g[s], fd, max_relative = 1e-4);
    }
    let at_zero = model.envelope_sq_grad(10, 0.0);
    assert!(at_zero.is_finite() && at_zero >= 0.0);
}

#[test]
fn gradient_etn_limit() {
    let sc = default_scene(64);
    let mut model = TrajectoryModel::new(&sc, 64).unwrap();
    // Operate where the gain is large so that the amplified thermal field
    // dominates the shot noise.
    let p = itn_limited_from_model(&model, 1.5);
    model.e_i_sq *= 1e6;
    let slope = model.field_gain / model.e_i_sq;
    for s in (0..64).step_by(9) {
        let g = model.envelope_sq_grad(s, p.samples[s]);
        assert!((g - slope).abs() / slope < 0.02, "sample {s}: {g:e} vs {slope:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn less_noise_never_hurts(s in 0usize..128, p in 0.01f64..20.0, shrink in 0.01f64..1.0) {
        let sc = default_scene(128);
        let model = TrajectoryModel::new(&sc, 128).unwrap();
        let base = model.snr_parts(s, p).2;
        let mut quiet_etn = model.clone();
        quiet_etn.e_i_sq *= shrink;
        prop_assert!(quiet_etn.snr_parts(s, p).2 >= base * (1.0 - 1e-12));
        let mut quiet_itn = model.clone();
        quiet_itn.shot *= shrink;
        prop_assert!(quiet_itn.snr_parts(s, p).2 >= base * (1.0 - 1e-12));
    }

    #[test]
    fn pds_output_feasible(scale in 0.2f64..3.0, budget in 0.5f64..4.0) {
        let mut sc = default_scene(128);
        sc.power = PowerTrajectory::fixed(128, budget);
        let model = TrajectoryModel::new(&sc, 128).unwrap();
        let init = itn_limited_from_model(&model, budget);
        let init = PowerTrajectory { samples: init.samples.iter().map(|x| x * scale).collect(), ..init };
        let out = pds_optimize(&init, &model, &PdsOptions { max_iter: 300, ..PdsOptions::default() }).unwrap();
        prop_assert!(out.trajectory.samples.iter().all(|&x| x >= 0.0));
        prop_assert!(out.trajectory.mean() <= budget * (1.0 + 1e-6));
        prop_assert!(out.objective >= model.mean_envelope_sq(&init.project().samples) * (1.0 - 1e-12));
    }
}
