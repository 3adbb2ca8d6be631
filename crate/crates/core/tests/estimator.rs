mod common;

use std::sync::Arc;

use approx::assert_relative_eq;

use common::{echo, fading_for_snr, flat_response, optimized_scene, rmse, default_scene};
use rare_core::constants::TWO_PI;
use rare_core::crlb::crlb_tau_asymptotic;
use rare_core::estimator::classic::ClassicEstimator;
use rare_core::estimator::multi::estimate_multi;
use rare_core::estimator::{
    amplitude_estimate, coarse_estimate, estimate_range, newton_refine, objective_q, EstimateRow, NewtonOptions,
    Prepared, RangeEstimator, ZERO_PAD,
};
use rare_core::scene::build_channel;
use rare_core::signal::{synthesize_classic_opt, synthesize_with_response, ReceiverResponse};

const N: usize = 4096;
const T: f64 = 1e-3;

fn flat(omega: f64, phi: f64, h: f64) -> rare_core::signal::ReceivedRecord {
    let resp = flat_response(N, T, 150e6, 1.0);
    synthesize_with_response(&resp, &[echo(&resp, omega, phi, h)], 0, true).unwrap()
}

#[test]
fn quadrature_template_scores_zero() {
    let omega = TWO_PI * 1000.3 / T;
    let phi = 0.4;
    let dt = T / N as f64;
    let env = vec![1.0; N];
    let y: Vec<f64> = (0..N).map(|s| (omega * s as f64 * dt + phi).sin()).collect();
    let prep = Prepared::new(&y, &env, dt);
    let matched: Vec<f64> = (0..N).map(|s| (omega * s as f64 * dt + phi).cos()).collect();
    let q_match = Prepared::new(&matched, &env, dt).objective(omega, phi).unwrap();
    assert!(prep.objective(omega, phi).unwrap() < 1e-6 * q_match);
}

#[test]
fn matched_template_attains_bound() {
    let (omega, phi, h) = (TWO_PI * 1000.3 / T, 0.4, 3.0);
    let rec = flat(omega, phi, h);
    let dt = rec.dt();
    let direct: f64 = (0..N).map(|s| (omega * s as f64 * dt + phi).cos().powi(2)).sum::<f64>() * dt;
    let q = objective_q(omega, phi, &rec).unwrap();
    assert_relative_eq!(q, h * h * direct, max_relative = 1e-9);
    assert_relative_eq!(q, h * h * T / 2.0, max_relative = 1e-3);
}

#[test]
fn objective_is_periodic_in_phase() {
    let sc = default_scene(N);
    let rec = rare_core::signal::synthesize_selfheterodyne(&sc, 9).unwrap();
    for &(w, p) in &[(6.0e6, 0.3), (6.3e6, -2.0), (1.0e5, 3.0)] {
        let a = objective_q(w, p, &rec).unwrap();
        let b = objective_q(w, p + TWO_PI, &rec).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

#[test]
fn degenerate_envelope_is_rejected() {
    let p = Prepared::new(&[1.0; 16], &[0.0; 16], 1e-3);
    assert!(p.objective(1.0, 0.0).is_err());
    assert!(p.amplitude(1.0, 0.0).is_err());
}

#[test]
fn bin_centre_recovered_exactly() {
    let bins = 1000 * ZERO_PAD;
    let bin_width = TWO_PI / (ZERO_PAD as f64 * T);
    let omega = bins as f64 * bin_width;
    let phi = 1.1;
    let c = coarse_estimate(&flat(omega, phi, 1.0)).unwrap();
    assert_eq!(c.peak_bin, bins);
    assert_relative_eq!(c.omega_bin, omega, max_relative = 1e-9);
    assert!((c.phi_bin - phi).abs() < 1e-9);
    assert_relative_eq!(c.bin_width, bin_width, max_relative = 1e-12);
}

#[test]
fn coarse_within_one_bin_on_optimized_envelope() {
    let sc = optimized_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let ch = sc.channel().unwrap();
    let rec = synthesize_with_response(&resp, &[ch], 0, true).unwrap();
    let c = coarse_estimate(&rec).unwrap();
    assert!((c.omega_bin - ch.omega_beat).abs() <= c.bin_width);
    assert!((c.omega_interp - ch.omega_beat).abs() <= c.bin_width);
}

#[test]
fn empty_record_is_an_error() {
    let rec = flat(1e5, 0.0, 1.0).with_y_norm(Vec::new());
    assert!(coarse_estimate(&rec).is_err());
}

#[test]
fn amplitude_recovery() {
    let (omega, phi, h) = (TWO_PI * 1234.5 / T, 2.2, 0.7);
    let rec = flat(omega, phi, h);
    assert_relative_eq!(amplitude_estimate(&rec, omega, phi).unwrap(), h, max_relative = 1e-6);
    let doubled = rec.with_y_norm(rec.y_norm.iter().map(|v| 2.0 * v).collect());
    assert_relative_eq!(amplitude_estimate(&doubled, omega, phi).unwrap(), 2.0 * h, max_relative = 1e-12);

    let sc = default_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let h = fading_for_snr(&resp, 10.0);
    let ch = sc.channel().unwrap().with_fading(h);
    let draws: Vec<f64> = (0..1000)
        .map(|seed| {
            let rec = synthesize_with_response(&resp, &[ch], seed, false).unwrap();
            amplitude_estimate(&rec, ch.omega_beat, ch.phi).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    assert!((mean - h).abs() < 2.0 * sd / (draws.len() as f64).sqrt(), "mean {mean} h {h} sd {sd}");
}

#[test]
fn newton_stays_at_optimum() {
    let sc = optimized_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let ch = sc.channel().unwrap();
    let rec = synthesize_with_response(&resp, &[ch], 0, true).unwrap();
    let e = newton_refine(&rec, ch.omega_beat, ch.phi, &NewtonOptions::default()).unwrap();
    assert_eq!(e.iterations, 0);
    assert!(e.converged);
    assert_eq!(e.omega_hat, ch.omega_beat);
    assert_relative_eq!(e.tau_hat, ch.tau, max_relative = 1e-12);
    assert_relative_eq!(e.range_hat, ch.range(), max_relative = 1e-12);
}

#[test]
fn newton_from_half_bin_offset() {
    let sc = optimized_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let ch = sc.channel().unwrap();
    let rec = synthesize_with_response(&resp, &[ch], 0, true).unwrap();
    let prep = Prepared::from_record(&rec);
    let half = 0.5 * TWO_PI / (ZERO_PAD as f64 * T);
    for sign in [-1.0, 1.0] {
        let w0 = ch.omega_beat + sign * half;
        let p0 = prep.dtft(w0).arg();
        let e = newton_refine(&rec, w0, p0, &NewtonOptions::default()).unwrap();
        // Noise-free, the truth is the global maximizer of Q (Cauchy-Schwarz),
        // so it is the fine-search oracle.
        assert!((e.tau_hat - ch.tau).abs() < 1e-4 / sc.waveform.bandwidth, "err {:e}", e.tau_hat - ch.tau);
        assert!(e.q_value >= e.q_initial);
        assert!(e.q_history.windows(2).all(|w| w[1] >= w[0]));
    }
}

/// Coarse and refined delay errors over `trials` seeds at the given mean SNR.
fn monte_carlo(snr_db: f64, trials: u64) -> (Vec<f64>, Vec<f64>, f64) {
    let sc = optimized_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let h = fading_for_snr(&resp, snr_db);
    let ch = sc.channel().unwrap().with_fading(h);
    let alpha = resp.sweep_slope;
    let mut est = RangeEstimator::new(N, NewtonOptions::default());
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    for seed in 0..trials {
        let rec = synthesize_with_response(&resp, &[ch], seed, false).unwrap();
        let prep = Prepared::from_record(&rec);
        let c = est.coarse_stage().estimate(&prep).unwrap();
        coarse.push(c.omega_interp / alpha + ch.tau_ref - ch.tau);
        let e = est.estimate_prepared(&prep, alpha, ch.tau_ref).unwrap();
        assert!(e.q_history.windows(2).all(|w| w[1] >= w[0]));
        assert!(e.q_value >= e.q_initial);
        fine.push(e.tau_hat - ch.tau);
    }
    let crlb = crlb_tau_asymptotic(&resp.envelope, h, alpha, resp.dt()).unwrap();
    (coarse, fine, crlb)
}

#[test]
fn coarse_stage_within_ten_times_bound() {
    let (coarse, _, crlb) = monte_carlo(20.0, 500);
    let r = rmse(&coarse);
    assert!(r <= 10.0 * crlb.sqrt(), "coarse rmse {r:e} bound {:e}", crlb.sqrt());
}

#[test]
fn refined_estimate_is_efficient() {
    for snr in [20.0, 25.0] {
        let (_, fine, crlb) = monte_carlo(snr, 500);
        let gap = 10.0 * (rmse(&fine) / crlb.sqrt()).log10();
        assert!(gap.abs() <= 3.0, "snr {snr}: rmse {:e} bound {:e}", rmse(&fine), crlb.sqrt());
    }
}

#[test]
fn phase_shift_equivariance() {
    let sc = optimized_scene(N);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let ch = sc.channel().unwrap();
    let opts = NewtonOptions::default();
    let base = estimate_range(&synthesize_with_response(&resp, &[ch], 0, true).unwrap(), &opts).unwrap();
    for shift in [0.5, 2.0, 4.0] {
        let moved = ch.with_phase(ch.phi + shift);
        let e = estimate_range(&synthesize_with_response(&resp, &[moved], 0, true).unwrap(), &opts).unwrap();
        assert_relative_eq!(e.omega_hat, base.omega_hat, max_relative = 1e-8);
        let d = (e.phi_hat - base.phi_hat - shift).rem_euclid(TWO_PI);
        assert!(d.min(TWO_PI - d) < 1e-8, "shift {shift} residual {d}");
    }
}

#[test]
fn grid_refinement_is_consistent() {
    let opts = NewtonOptions::default();
    let run = |n: usize| {
        let sc = optimized_scene(1024).clone();
        let mut fine = sc.clone();
        fine.grid_s = n;
        let resp = Arc::new(ReceiverResponse::from_scene(&fine).unwrap());
        estimate_range(&synthesize_with_response(&resp, &[fine.channel().unwrap()], 0, true).unwrap(), &opts).unwrap()
    };
    let a = run(N);
    let b = run(2 * N);
    assert_relative_eq!(a.omega_hat, b.omega_hat, max_relative = 1e-6);
    assert_relative_eq!(a.tau_hat, b.tau_hat, max_relative = 1e-6);
    assert_relative_eq!(a.h_hat, b.h_hat, max_relative = 1e-6);
}

#[test]
fn dropped_oscillating_term_is_small() {
    let sc = optimized_scene(N);
    let resp = ReceiverResponse::from_scene(&sc).unwrap();
    let dt = resp.dt();
    for cycles in [100.0, 300.0, 1000.0] {
        let omega = TWO_PI * cycles / T;
        let phi = 0.7;
        let (mut kept, mut dropped) = (0.0, 0.0);
        for (s, e) in resp.envelope.iter().enumerate() {
            kept += 0.5 * e * e;
            dropped += 0.5 * e * e * (2.0 * (omega * s as f64 * dt + phi)).cos();
        }
        assert!(dropped.abs() < 0.01 * kept, "cycles {cycles}: {:e}", dropped / kept);
    }
}

#[test]
fn noise_only_peaks_spread_over_band() {
    let mut sc = default_scene(1024);
    sc.fading_override = Some(0.0);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let ch = sc.channel().unwrap();
    let bins = 1024 * ZERO_PAD / 2;
    let mut quarters = [0usize; 4];
    for seed in 0..400 {
        let rec = synthesize_with_response(&resp, &[ch], seed, false).unwrap();
        let c = coarse_estimate(&rec).unwrap();
        quarters[(4 * c.peak_bin / bins).min(3)] += 1;
    }
    for q in quarters {
        assert!((70..=130).contains(&q), "{quarters:?}");
    }
}

#[test]
fn single_target_path_is_identical() {
    let sc = default_scene(N);
    let rec = rare_core::signal::synthesize_selfheterodyne(&sc, 4).unwrap();
    let opts = NewtonOptions::default();
    let one = estimate_range(&rec, &opts).unwrap();
    let multi = estimate_multi(&rec, 1, &opts).unwrap();
    let t = &multi.targets[0];
    assert_eq!(multi.targets.len(), 1);
    assert_eq!(t.omega_hat.to_bits(), one.omega_hat.to_bits());
    assert_eq!(t.phi_hat.to_bits(), one.phi_hat.to_bits());
    assert_eq!(t.h_hat.to_bits(), one.h_hat.to_bits());
    assert_eq!(t.tau_hat.to_bits(), one.tau_hat.to_bits());
    assert_eq!(t.range_hat.to_bits(), one.range_hat.to_bits());
    assert_eq!(multi.q_value.to_bits(), one.q_value.to_bits());
    assert_eq!(multi.iterations, one.iterations);
}

#[test]
fn two_targets_noiseless() {
    let n = 16384;
    let sc = default_scene(n);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let near = sc.channel().unwrap();
    let far = build_channel(&sc.geometry.with_range(5000.0), &sc.waveform).unwrap().with_fading(near.h);
    let rec = synthesize_with_response(&resp, &[near, far], 0, true).unwrap();
    let est = estimate_multi(&rec, 2, &NewtonOptions::default()).unwrap();
    assert!(!est.partial);
    let mut ranges: Vec<f64> = est.targets.iter().map(|t| t.range_hat).collect();
    ranges.sort_by(f64::total_cmp);
    assert!((ranges[0] - 1000.0).abs() < 1.0, "{ranges:?}");
    assert!((ranges[1] - 5000.0).abs() < 1.0, "{ranges:?}");
    let bin = TWO_PI / (ZERO_PAD as f64 * T);
    assert!((est.targets[0].omega_hat - est.targets[1].omega_hat).abs() >= bin);
}

#[test]
fn weak_second_target_stays_accurate() {
    let n = 8192;
    let sc = default_scene(n);
    let resp = Arc::new(ReceiverResponse::from_scene(&sc).unwrap());
    let h_weak = fading_for_snr(&resp, 25.0);
    let strong = sc.channel().unwrap().with_fading(10.0 * h_weak);
    let weak = build_channel(&sc.geometry.with_range(2500.0), &sc.waveform).unwrap().with_fading(h_weak);
    let opts = NewtonOptions::default();
    let mut joint = Vec::new();
    let mut alone = Vec::new();
    for seed in 0..100 {
        let rec = synthesize_with_response(&resp, &[strong, weak], seed, false).unwrap();
        let est = estimate_multi(&rec, 2, &opts).unwrap();
        let best = est
            .targets
            .iter()
            .map(|t| t.tau_hat - weak.tau)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        joint.push(best);
        let single = synthesize_with_response(&resp, &[weak], seed, false).unwrap();
        alone.push(estimate_range(&single, &opts).unwrap().tau_hat - weak.tau);
    }
    assert!(rmse(&joint) <= 5.0 * rmse(&alone), "joint {:e} alone {:e}", rmse(&joint), rmse(&alone));
}

#[test]
fn estimate_row_json_keys() {
    let rec = flat(TWO_PI * 500.25 / T, 0.3, 1.0);
    let e = estimate_range(&rec, &NewtonOptions::default()).unwrap();
    let row = EstimateRow::new(rec.seed, rec.truth.tau, &e);
    let text = serde_json::to_string(&row).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for k in ["seed", "truth_tau", "tau_hat", "range_hat", "h_hat", "q_value", "iterations", "converged"] {
        assert!(keys.contains(&k), "missing {k}");
    }
    let back: EstimateRow = serde_json::from_str(&text).unwrap();
    assert_eq!(back, row);
}

#[test]
fn classic_baseline_recovers_delay() {
    let sc = default_scene(N);
    let rec = synthesize_classic_opt(&sc, 0, true).unwrap();
    let mut est = ClassicEstimator::new(N, NewtonOptions::default());
    let e = est.estimate(&rec).unwrap();
    assert!((e.tau_hat - rec.truth.tau).abs() < 1e-4 / sc.waveform.bandwidth);
    assert_relative_eq!(e.amplitude_hat, rec.amplitude, max_relative = 1e-3);
}
