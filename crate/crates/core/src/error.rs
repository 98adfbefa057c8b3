use std::io;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown nonlinearity `{0}`")]
    UnknownName(String),
    #[error("nonlinearity `{0}` has no potential")]
    MissingPotential(String),
    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("profile evaluated at r = {r} outside [{lo}, {hi}]")]
    OutOfDomain { r: f64, lo: f64, hi: f64 },
    #[error("kelvin transform needs a profile bounded away from the origin")]
    DomainError,
    #[error("fixed-point map failed to contract: {0}")]
    ContractionFailure(String),
    #[error("step size underflow at r = {r} without blow-up (|u| = {norm})")]
    StiffnessFailure { r: f64, norm: f64 },
    #[error("no stationary solutions: max of F on the sphere is {0} <= 0")]
    EmptyZ(f64),
    #[error("profile carries no gradient energy")]
    DegenerateProfile,
    #[error("domain too small: need R_max >= {needed}, have {available}")]
    DomainTooSmall { needed: f64, available: f64 },
    #[error("non-finite value in state at t = {0}")]
    NonFiniteState(f64),
    #[error("radiation extraction needs at least two sample times, got {0}")]
    InsufficientWindow(usize),
    #[error("energy budget exhausted at scale {j}: {found} scale(s) found")]
    EnergyBudgetExceeded { j: usize, found: usize, scales: Vec<f64> },
    #[error("virial series needs at least three snapshots, got {0}")]
    InsufficientSnapshots(usize),
    #[error("energy {0} is not positive")]
    NonpositiveEnergy(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
