//! Fast invariant checks run by the `selftest` verb.

use rare_core::constants::{angular, TWO_PI};
use rare_core::crlb::crlb_tau_asymptotic;
use rare_core::physics::lindblad::steady_state;
use rare_core::physics::{derive_constants, gain_upsilon, steady_rho12, transmission_pi, AtomicSystem};
use rare_core::ptraj::{itn_limited_from_model, pds_optimize, PdsOptions, TrajectoryModel};

use crate::config::{ExperimentConfig, RangeMode, Sweep, SweepVariable, TrajectoryMode};
use crate::harness::{crlb_floors_rmse, point_scene, rmse_inversions, run_sweep};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn gain_vs_difference() -> Check {
    let k = derive_constants(&AtomicSystem::default()).expect("default atoms");
    let mut worst = 0.0f64;
    for &w in &log_grid(angular(0.5e6), angular(50e6), 20) {
        for &d in &log_grid(angular(0.01e6), angular(50e6), 20) {
            let step = 1e-6 * w;
            let hi = transmission_pi(w + step, d, &k).unwrap_or(f64::NAN);
            let lo = transmission_pi(w - step, d, &k).unwrap_or(f64::NAN);
            let fd = (hi - lo) / (2.0 * step);
            let g = gain_upsilon(w, d, &k).unwrap_or(f64::NAN);
            worst = worst.max(((g - fd) / fd).abs());
        }
    }
    check("gain matches finite difference", worst < 1e-5, format!("worst relative gap {worst:.2e}"))
}

fn closed_form_vs_liouvillian() -> Check {
    let atoms = AtomicSystem { gamma3: angular(1.0), gamma4: angular(1.0), ..AtomicSystem::default() };
    let k = derive_constants(&atoms).expect("valid atoms");
    let mut worst = 0.0f64;
    for w in [angular(2e6), angular(4e6)] {
        for d in [0.0, angular(1e6), angular(4e6)] {
            let ode = steady_state(w, d, &atoms).map(|s| s.rho12().im).unwrap_or(f64::NAN);
            let cf = steady_rho12(w, d, &k).map(|r| r.im).unwrap_or(f64::NAN);
            worst = worst.max(((ode - cf) / cf).abs());
        }
    }
    check("closed-form steady state matches Liouvillian", worst < 0.01, format!("worst relative gap {worst:.2e}"))
}

fn constant_envelope_bound() -> Check {
    let (n, t, rho, h) = (1 << 18, 1e-3, 2.0, 0.5);
    let alpha = TWO_PI * 150e6 / t;
    let env = vec![rho; n];
    let got = crlb_tau_asymptotic(&env, h, alpha, t / n as f64).unwrap_or(f64::NAN);
    let closed = 24.0 / (alpha * alpha * h * h * rho * rho * t * t * t);
    let gap = ((got - closed) / closed).abs();
    check("constant-envelope delay bound", gap < 1e-9, format!("relative gap {gap:.2e}"))
}

fn pds_feasible_and_improving() -> Check {
    let cfg = ExperimentConfig::default();
    let result = (|| -> Result<(f64, f64, f64), String> {
        let scene = point_scene(&cfg, cfg.sweep.values[0]).map_err(|e| e.to_string())?;
        let model = TrajectoryModel::new(&scene, 1024).map_err(|e| e.to_string())?;
        let init = itn_limited_from_model(&model, cfg.p_avg).project();
        let out = pds_optimize(&init, &model, &PdsOptions::default()).map_err(|e| e.to_string())?;
        let fixed = model.mean_envelope_sq(&vec![cfg.p_avg; 1024]);
        let init_obj = model.mean_envelope_sq(&init.samples);
        let excess = out.trajectory.mean() / cfg.p_avg - 1.0;
        if out.trajectory.samples.iter().any(|&p| p < 0.0) {
            return Err("negative power sample".into());
        }
        Ok((excess, out.objective / init_obj.max(fixed), out.objective))
    })();
    match result {
        Ok((excess, ratio, obj)) => check(
            "pds output feasible and above both starts",
            excess <= 1e-6 && ratio >= 1.0,
            format!("budget excess {excess:.1e}, objective {obj:.4e} ({ratio:.4}x best start)"),
        ),
        Err(e) => check("pds output feasible and above both starts", false, e),
    }
}

fn small_sweep() -> ExperimentConfig {
    ExperimentConfig {
        trajectory_mode: TrajectoryMode::Fixed,
        sweep: Sweep { variable: SweepVariable::Snr, values: vec![30.0, 35.0, 40.0, 45.0] },
        trials: 60,
        grid_s: 1 << 14,
        trajectory_grid: 1024,
        range_mode: RangeMode::Ladder,
        range_max: 2e3,
        ..ExperimentConfig::default()
    }
}

fn sweep_checks() -> Vec<Check> {
    let cfg = small_sweep();
    let (a, b) = match (run_sweep(&cfg), run_sweep(&cfg)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![check("small sweep runs", false, e.to_string())],
    };
    let inversions = rmse_inversions(&a);
    vec![
        check("sweep is deterministic", a == b, format!("{} rows compared", a.len())),
        check("rmse falls with snr", inversions <= 1, format!("{inversions} inversions")),
        check(
            "bound sits below rmse at the top two points",
            crlb_floors_rmse(&a, 2),
            a.iter().rev().take(2).map(|r| format!("{:.3e}/{:.3e}", r.crlb_tau, r.rmse_tau)).collect::<Vec<_>>().join(", "),
        ),
    ]
}

pub fn run_all() -> Vec<Check> {
    let mut out = vec![gain_vs_difference(), closed_form_vs_liouvillian(), constant_envelope_bound(), pds_feasible_and_improving()];
    out.extend(sweep_checks());
    out
}
