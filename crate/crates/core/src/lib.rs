//! Numerical laboratory for radial energy-critical wave systems
//! `u_tt - Δu = f(u)` on ℝ³ with ℝᵐ-valued `u` and degree-5 homogeneous `f`.
//!
//! All radial integrals drop the `4π` solid-angle factor: `∫ g dx` is
//! reported as `∫₀^∞ g(r) r² dr`.

pub mod error;
pub mod evolution;
pub mod nonlinearity;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod radiation;
pub mod resolution;
pub mod stationary;
pub mod tail;

pub use error::{Error, Result};

pub use nonlinearity::{builtin, Nonlinearity, Registry, VectorNonlinearity};
pub use profile::RadialProfile;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Round-trip exact text form (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
