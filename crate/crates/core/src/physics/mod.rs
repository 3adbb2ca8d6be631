//! Four-level steady-state response of the Rydberg receiver.
//!
//! The receiver output is `V_in * exp(-C0 * Im rho12)` where `rho12` is the
//! steady-state probe coherence under an RF drive of Rabi frequency `omega`
//! and detuning `delta` (both rad/s).

pub mod lindblad;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{angular, BOHR_RADIUS, ELECTRON_CHARGE, EPSILON0, HBAR, SPEED_OF_LIGHT, TWO_PI};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicSystem {
    pub omega_p_rabi: f64,
    pub omega_c_rabi: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub mu12: f64,
    pub mu34: f64,
    pub n_atoms: f64,
    pub cell_length: f64,
    pub lambda_probe: f64,
    pub p_in: f64,
    pub r_load: f64,
    pub quantum_eff: f64,
    pub omega34: f64,
}

impl Default for AtomicSystem {
    /// Cesium vapor cell with the standard laboratory operating point.
    fn default() -> Self {
        let ea0 = ELECTRON_CHARGE * BOHR_RADIUS;
        AtomicSystem {
            omega_p_rabi: angular(5.8e6),
            omega_c_rabi: angular(1.0e6),
            gamma2: angular(5.2e6),
            gamma3: angular(1.0e3),
            gamma4: angular(1.0e3),
            mu12: 2.586 * ea0,
            mu34: 2409.0 * ea0,
            n_atoms: 4.89e16,
            cell_length: 0.02,
            lambda_probe: 852e-9,
            p_in: 120e-6,
            r_load: 2.0e3,
            quantum_eff: 0.8,
            omega34: angular(3.212e9),
        }
    }
}

impl AtomicSystem {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_p_rabi", self.omega_p_rabi),
            ("omega_c_rabi", self.omega_c_rabi),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
            ("mu12", self.mu12),
            ("mu34", self.mu34),
            ("n_atoms", self.n_atoms),
            ("cell_length", self.cell_length),
            ("lambda_probe", self.lambda_probe),
            ("p_in", self.p_in),
            ("r_load", self.r_load),
            ("omega34", self.omega34),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.quantum_eff > 0.0 && self.quantum_eff <= 1.0) {
            return Err(invalid("quantum_eff", format!("must lie in (0, 1], got {}", self.quantum_eff)));
        }
        Ok(())
    }

    /// Probe laser angular frequency.
    pub fn omega_probe(&self) -> f64 {
        TWO_PI * SPEED_OF_LIGHT / self.lambda_probe
    }
}

/// Coefficients of the steady-state coherence polynomial and readout scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c0: f64,
    pub v_in: f64,
    pub k_p: f64,
}

pub fn derive_constants(atoms: &AtomicSystem) -> Result<DerivedConstants> {
    atoms.validate()?;
    derive_unchecked(atoms)
}

/// Same as [`derive_constants`] but admits a zero coupling Rabi frequency.
pub fn derive_unchecked(atoms: &AtomicSystem) -> Result<DerivedConstants> {
    let wp = atoms.omega_p_rabi;
    let wc = atoms.omega_c_rabi;
    let g2 = atoms.gamma2;
    if !(wp > 0.0) {
        return Err(invalid("omega_p_rabi", "must be positive"));
    }
    let sum_sq = wc * wc + wp * wp;
    let k_p = TWO_PI / atoms.lambda_probe;
    let c0 = 2.0 * atoms.n_atoms * atoms.mu12 * atoms.mu12 * k_p * atoms.cell_length / (EPSILON0 * HBAR * wp);
    let v_in = atoms.r_load * ELECTRON_CHARGE * atoms.quantum_eff / (HBAR * atoms.omega_probe()) * atoms.p_in;
    Ok(DerivedConstants {
        a1: 2.0 * wp * wc * wc,
        b1: g2 * wp,
        c1: 2.0 * wp * wp + g2 * g2,
        c2: 2.0 * wp * wp * sum_sq,
        c3: 4.0 * sum_sq * sum_sq,
        c0,
        v_in,
        k_p,
    })
}

fn check_omega(omega: f64) -> Result<()> {
    if omega >= 0.0 {
        Ok(())
    } else {
        Err(invalid("omega", format!("Rabi frequency must be nonnegative, got {omega}")))
    }
}

impl DerivedConstants {
    #[inline]
    fn den(&self, omega: f64, delta: f64) -> f64 {
        let w2 = omega * omega;
        self.c1 * w2 * w2 + self.c2 * w2 + self.c3 * delta * delta
    }

    /// Absorption shape `Omega^4 / den`, zero at `Omega = 0`.
    #[inline]
    fn shape(&self, omega: f64, delta: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        let w2 = omega * omega;
        w2 * w2 / self.den(omega, delta)
    }

    /// First derivative of [`Self::shape`] in omega.
    #[inline]
    fn shape_d1(&self, omega: f64, delta: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        let d = self.den(omega, delta);
        let w2 = omega * omega;
        2.0 * omega * w2 * (self.c2 * w2 + 2.0 * self.c3 * delta * delta) / (d * d)
    }

    /// Second derivative of [`Self::shape`] in omega.
    #[inline]
    fn shape_d2(&self, omega: f64, delta: f64) -> f64 {
        let d = self.den(omega, delta);
        let w2 = omega * omega;
        let dd = 4.0 * self.c1 * omega * w2 + 2.0 * self.c2 * omega;
        let num = 2.0 * self.c2 * w2 * w2 * omega + 4.0 * self.c3 * delta * delta * w2 * omega;
        let num_d = 10.0 * self.c2 * w2 * w2 + 12.0 * self.c3 * delta * delta * w2;
        if d == 0.0 {
            return 0.0;
        }
        (num_d * d - 2.0 * num * dd) / (d * d * d)
    }

    #[inline]
    fn absorption(&self) -> f64 {
        self.b1 * self.c0
    }

    pub fn pi_unchecked(&self, omega: f64, delta: f64) -> f64 {
        self.v_in * (-self.absorption() * self.shape(omega, delta)).exp()
    }

    pub fn upsilon_unchecked(&self, omega: f64, delta: f64) -> f64 {
        let k = self.absorption();
        -self.v_in * k * self.shape_d1(omega, delta) * (-k * self.shape(omega, delta)).exp()
    }

    /// Derivative of the gain in omega.
    pub fn upsilon_d_omega(&self, omega: f64, delta: f64) -> f64 {
        let k = self.absorption();
        let u1 = self.shape_d1(omega, delta);
        let u2 = self.shape_d2(omega, delta);
        self.v_in * k * (-k * self.shape(omega, delta)).exp() * (k * u1 * u1 - u2)
    }

    pub fn kappa_unchecked(&self, omega: f64, delta: f64) -> f64 {
        (self.upsilon_unchecked(omega, delta) * omega).abs() / self.pi_unchecked(omega, delta).sqrt()
    }
}

/// Probe readout voltage `Pi(omega, delta)`.
pub fn transmission_pi(omega: f64, delta: f64, k: &DerivedConstants) -> Result<f64> {
    check_omega(omega)?;
    Ok(k.pi_unchecked(omega, delta))
}

/// Gain `d Pi / d omega`, nonpositive everywhere.
pub fn gain_upsilon(omega: f64, delta: f64, k: &DerivedConstants) -> Result<f64> {
    check_omega(omega)?;
    Ok(k.upsilon_unchecked(omega, delta))
}

/// Sensitivity ratio `|Upsilon * omega| / sqrt(Pi)`.
pub fn kappa(omega: f64, delta: f64, k: &DerivedConstants) -> Result<f64> {
    check_omega(omega)?;
    Ok(k.kappa_unchecked(omega, delta))
}

/// Closed-form steady-state probe coherence.
pub fn steady_rho12(omega_rf: f64, delta_rf: f64, k: &DerivedConstants) -> Result<Complex64> {
    check_omega(omega_rf)?;
    if omega_rf == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let w2 = omega_rf * omega_rf;
    let d = k.den(omega_rf, delta_rf);
    Ok(Complex64::new(k.a1 * w2 * delta_rf * delta_rf / d, k.b1 * w2 * w2 / d))
}

/// Readout voltage implied by a probe coherence.
pub fn readout_voltage(rho12: Complex64, k: &DerivedConstants) -> f64 {
    k.v_in * (-k.c0 * rho12.im).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> DerivedConstants {
        derive_constants(&AtomicSystem::default()).unwrap()
    }

    #[test]
    fn coefficients_reproduce_definitions() {
        let a = AtomicSystem::default();
        let k = table();
        let (wp, wc, g2) = (a.omega_p_rabi, a.omega_c_rabi, a.gamma2);
        let rel = |x: f64, y: f64| ((x - y) / y).abs();
        assert!(rel(k.c1, 2.0 * wp * wp + g2 * g2) < 1e-12);
        assert!(rel(k.c2, 2.0 * wp * wp * (wc * wc + wp * wp)) < 1e-12);
        assert!(rel(k.c3, 4.0 * (wc * wc + wp * wp).powi(2)) < 1e-12);
        assert!(rel(k.b1, TWO_PI * TWO_PI * 30.16e12) < 1e-12);
    }

    #[test]
    fn zero_coupling_identities() {
        let x = angular(3.0e6);
        let a = AtomicSystem { omega_p_rabi: x, omega_c_rabi: 0.0, ..AtomicSystem::default() };
        let k = derive_unchecked(&a).unwrap();
        assert!(((k.c2 - 2.0 * x.powi(4)) / k.c2).abs() < 1e-12);
        assert!(((k.c3 - 4.0 * x.powi(4)) / k.c3).abs() < 1e-12);
    }

    #[test]
    fn input_voltage_hand_arithmetic() {
        // 2e3 * 1.602176634e-19 * 0.8 * 120e-6 / (hbar * 2 pi c / 852e-9)
        let photon_energy = 1.054_571_817e-34 * 2.0 * std::f64::consts::PI * 299_792_458.0 / 852e-9;
        let expected = 2e3 * 1.602_176_634e-19 * 0.8 * 120e-6 / photon_energy;
        assert!((table().v_in - expected).abs() / expected < 1e-12);
        assert!((expected - 0.131_939).abs() < 1e-5);
    }

    #[test]
    fn limits() {
        let k = table();
        let a = AtomicSystem::default();
        assert_eq!(transmission_pi(0.0, 0.0, &k).unwrap(), k.v_in);
        assert_eq!(transmission_pi(0.0, 1e7, &k).unwrap(), k.v_in);
        assert_eq!(gain_upsilon(0.0, 3e6, &k).unwrap(), 0.0);
        assert_eq!(kappa(0.0, 3e6, &k).unwrap(), 0.0);
        let big = 1e6 * a.omega_p_rabi.max(a.omega_c_rabi);
        let lim = k.v_in * (-k.b1 * k.c0 / k.c1).exp();
        let pi = transmission_pi(big, 1e7, &k).unwrap();
        assert!(((pi - lim) / lim).abs() < 1e-3);
        assert!(gain_upsilon(big, 1e7, &k).unwrap().abs() * big / k.v_in < 1e-6);
        assert!(transmission_pi(-1.0, 0.0, &k).is_err());
        assert!(gain_upsilon(-1.0, 0.0, &k).is_err());
        assert!(kappa(-1.0, 0.0, &k).is_err());
        assert!(steady_rho12(-1.0, 0.0, &k).is_err());
    }

    #[test]
    fn rho12_special_points() {
        let k = table();
        assert_eq!(steady_rho12(0.0, 0.0, &k).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(steady_rho12(0.0, 5e6, &k).unwrap(), Complex64::new(0.0, 0.0));
        let w = angular(2e6);
        let r = steady_rho12(w, 0.0, &k).unwrap();
        assert_eq!(r.re, 0.0);
        let expected = k.b1 / (k.c1 + k.c2 / (w * w));
        assert!((r.im - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn rejects_bad_atoms() {
        let a = AtomicSystem { quantum_eff: 1.5, ..AtomicSystem::default() };
        assert!(derive_constants(&a).is_err());
        let a = AtomicSystem { gamma2: 0.0, ..AtomicSystem::default() };
        assert!(derive_constants(&a).is_err());
    }
}
