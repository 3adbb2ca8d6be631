//! Physical constants (SI).

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius as rounded in the reference atomic tables.
pub const BOHR_RADIUS: f64 = 52.9e-12;
pub const EPSILON0: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Impedance of free space, ohms.
pub const Z0: f64 = 376.730_313_668;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Hz to rad/s.
#[inline]
pub fn angular(f_hz: f64) -> f64 {
    TWO_PI * f_hz
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
