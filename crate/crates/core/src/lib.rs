//! Simulation, estimation and power-trajectory design for a self-heterodyne
//! Rydberg atomic receiver performing LFM range sensing.

pub mod constants;
pub mod error;
pub mod physics;
pub mod scene;
pub mod signal;
pub mod estimator;
pub mod crlb;
pub mod ptraj;

pub use error::{Error, Result};
pub use physics::{AtomicSystem, DerivedConstants};
