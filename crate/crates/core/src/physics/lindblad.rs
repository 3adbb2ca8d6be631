//! Time-domain Lindblad integration of the four-level ladder.
//!
//! Used as the reference against which the closed-form steady state and the
//! synthesized receiver waveform are checked.

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;

use super::AtomicSystem;
use crate::error::{Error, Result};

pub type DensityMatrix = Matrix4<Complex64>;

/// Time-varying RF drive returning `(omega_rf, delta_rf)` in rad/s.
pub trait Drive {
    fn at(&self, t: f64) -> (f64, f64);
}

impl<F: Fn(f64) -> (f64, f64)> Drive for F {
    fn at(&self, t: f64) -> (f64, f64) {
        self(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantDrive {
    pub omega_rf: f64,
    pub delta_rf: f64,
}

impl Drive for ConstantDrive {
    fn at(&self, _t: f64) -> (f64, f64) {
        (self.omega_rf, self.delta_rf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrixState {
    pub rho: DensityMatrix,
}

impl DensityMatrixState {
    pub fn ground() -> Self {
        let mut rho = DensityMatrix::zeros();
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        DensityMatrixState { rho }
    }

    pub fn rho12(&self) -> Complex64 {
        self.rho[(0, 1)]
    }

    pub fn trace_error(&self) -> f64 {
        (self.rho.trace() - Complex64::new(1.0, 0.0)).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LindbladTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrixState>,
    /// Number of accepted integration steps.
    pub steps: usize,
}

impl LindbladTrajectory {
    pub fn rho12(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.rho12()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step as a fraction of the fastest system period.
    pub step_fraction: f64,
    /// Allowed trace and Hermiticity drift.
    pub invariant_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-8, atol: 1e-11, step_fraction: 0.05, invariant_tol: 1e-9 }
    }
}

fn hamiltonian(atoms: &AtomicSystem, omega_rf: f64, delta_rf: f64) -> Matrix4<f64> {
    let (p, c, r) = (0.5 * atoms.omega_p_rabi, 0.5 * atoms.omega_c_rabi, 0.5 * omega_rf);
    Matrix4::new(
        0.0, p, 0.0, 0.0, //
        p, 0.0, c, 0.0, //
        0.0, c, 0.0, r, //
        0.0, 0.0, r, -delta_rf,
    )
}

/// Right-hand side `d rho / dt` in the rotating frame.
pub fn lindblad_rhs(rho: &DensityMatrix, atoms: &AtomicSystem, omega_rf: f64, delta_rf: f64) -> DensityMatrix {
    let h = hamiltonian(atoms, omega_rf, delta_rf).map(|x| Complex64::new(x, 0.0));
    let comm = h * rho - rho * h;
    let mut out = comm * Complex64::new(0.0, -1.0);
    let gam = [0.0, atoms.gamma2, atoms.gamma3, atoms.gamma4];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                out[(i, j)] -= rho[(i, j)] * (0.5 * (gam[i] + gam[j]));
            }
        }
    }
    let (r22, r33, r44) = (rho[(1, 1)], rho[(2, 2)], rho[(3, 3)]);
    out[(0, 0)] += r22 * atoms.gamma2 + r44 * atoms.gamma4;
    out[(1, 1)] += r33 * atoms.gamma3 - r22 * atoms.gamma2;
    out[(2, 2)] -= r33 * atoms.gamma3;
    out[(3, 3)] -= r44 * atoms.gamma4;
    out
}

fn fastest_rate(atoms: &AtomicSystem, omega_rf: f64, delta_rf: f64) -> f64 {
    [atoms.omega_p_rabi, atoms.omega_c_rabi, omega_rf.abs(), delta_rf.abs(), atoms.gamma2]
        .into_iter()
        .fold(0.0, f64::max)
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from the ground state and records `n_steps + 1` uniformly spaced
/// states over `t_span` (inclusive of both ends).
pub fn integrate_lindblad<D: Drive + ?Sized>(
    drive: &D,
    atoms: &AtomicSystem,
    t_span: (f64, f64),
    n_steps: usize,
) -> Result<LindbladTrajectory> {
    integrate_lindblad_with(drive, atoms, t_span, n_steps, &IntegratorOptions::default())
}

pub fn integrate_lindblad_with<D: Drive + ?Sized>(
    drive: &D,
    atoms: &AtomicSystem,
    t_span: (f64, f64),
    n_steps: usize,
    opts: &IntegratorOptions,
) -> Result<LindbladTrajectory> {
    let (t0, t1) = t_span;
    if !(t1 > t0) || n_steps == 0 {
        return Err(Error::Validation { name: "t_span", reason: "need t1 > t0 and n_steps >= 1".into() });
    }
    let dt_out = (t1 - t0) / n_steps as f64;
    let f = |t: f64, y: &DensityMatrix| {
        let (w, d) = drive.at(t);
        lindblad_rhs(y, atoms, w, d)
    };

    let mut y = DensityMatrixState::ground().rho;
    let mut t = t0;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    states.push(DensityMatrixState { rho: y });

    let mut k1 = f(t, &y);
    let mut h = {
        let (w, d) = drive.at(t0);
        let r = fastest_rate(atoms, w, d);
        if r > 0.0 { (opts.step_fraction / r).min(dt_out) } else { dt_out }
    };
    let mut accepted = 0usize;

    for out_idx in 1..=n_steps {
        let t_target = t0 + dt_out * out_idx as f64;
        while t < t_target {
            let (w, d) = drive.at(t);
            let rate = fastest_rate(atoms, w, d);
            let h_max = if rate > 0.0 { opts.step_fraction / rate } else { f64::INFINITY };
            h = h.min(h_max);
            let mut last = false;
            if t + h >= t_target * (1.0 - 1e-15) || t + h >= t_target {
                h = t_target - t;
                last = true;
            }
            let k2 = f(t + h / 5.0, &(y + k1.map(|z| z * (h * A21))));
            let k3 = f(t + 0.3 * h, &(y + k1.map(|z| z * (h * A31)) + k2.map(|z| z * (h * A32))));
            let k4 = f(t + 0.8 * h, &(y + k1.map(|z| z * (h * A41)) + k2.map(|z| z * (h * A42)) + k3.map(|z| z * (h * A43))));
            let k5 = f(
                t + 8.0 / 9.0 * h,
                &(y + k1.map(|z| z * (h * A51)) + k2.map(|z| z * (h * A52)) + k3.map(|z| z * (h * A53)) + k4.map(|z| z * (h * A54))),
            );
            let k6 = f(
                t + h,
                &(y + k1.map(|z| z * (h * A61)) + k2.map(|z| z * (h * A62)) + k3.map(|z| z * (h * A63)) + k4.map(|z| z * (h * A64)) + k5.map(|z| z * (h * A65))),
            );
            let y_new = y + k1.map(|z| z * (h * B1)) + k3.map(|z| z * (h * B3)) + k4.map(|z| z * (h * B4)) + k5.map(|z| z * (h * B5)) + k6.map(|z| z * (h * B6));
            let k7 = f(t + h, &y_new);
            let err = k1.map(|z| z * (h * E1)) + k3.map(|z| z * (h * E3)) + k4.map(|z| z * (h * E4)) + k5.map(|z| z * (h * E5)) + k6.map(|z| z * (h * E6)) + k7.map(|z| z * (h * E7));
            let mut err_norm: f64 = 0.0;
            for i in 0..16 {
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err_norm = err_norm.max(err[i].norm() / scale);
            }
            if !err_norm.is_finite() {
                return Err(Error::Integration { step: accepted, time: t, reason: "non-finite state".into() });
            }
            if err_norm <= 1.0 {
                t = if last { t_target } else { t + h };
                y = y_new;
                k1 = k7;
                accepted += 1;
                let st = DensityMatrixState { rho: y };
                let (te, he) = (st.trace_error(), st.hermiticity_error());
                if te > opts.invariant_tol || he > opts.invariant_tol {
                    return Err(Error::Integration {
                        step: accepted,
                        time: t,
                        reason: format!("trace drift {te:e}, hermiticity drift {he:e}"),
                    });
                }
                let grow = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h *= grow;
                } else {
                    h = h.max(1e-300) * grow.max(1.0);
                }
            } else {
                h *= (0.9 * err_norm.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        times.push(t_target);
        states.push(DensityMatrixState { rho: y });
    }
    Ok(LindbladTrajectory { times, states, steps: accepted })
}

/// Stationary state for a constant drive, from the null space of the
/// Liouvillian with the trace condition substituted for one equation.
pub fn steady_state(omega_rf: f64, delta_rf: f64, atoms: &AtomicSystem) -> Result<DensityMatrixState> {
    let mut sup = DMatrix::<Complex64>::zeros(16, 16);
    for col in 0..16 {
        let mut basis = DensityMatrix::zeros();
        basis[(col / 4, col % 4)] = Complex64::new(1.0, 0.0);
        let image = lindblad_rhs(&basis, atoms, omega_rf, delta_rf);
        for row in 0..16 {
            sup[(row, col)] = image[(row / 4, row % 4)];
        }
    }
    let mut rhs = DVector::<Complex64>::zeros(16);
    for col in 0..16 {
        sup[(0, col)] = Complex64::new(0.0, 0.0);
    }
    for i in 0..4 {
        sup[(0, i * 4 + i)] = Complex64::new(1.0, 0.0);
    }
    rhs[0] = Complex64::new(1.0, 0.0);
    let sol = sup.lu().solve(&rhs).ok_or_else(|| Error::Degenerate("singular Liouvillian".into()))?;
    let mut rho = DensityMatrix::zeros();
    for idx in 0..16 {
        rho[(idx / 4, idx % 4)] = sol[idx];
    }
    Ok(DensityMatrixState { rho })
}
