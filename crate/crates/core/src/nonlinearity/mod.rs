//! Degree-5 homogeneous nonlinearities `f: ℝᵐ → ℝᵐ` and their potentials.
//!
//! Every nonlinearity is a [`Nonlinearity`] trait object. Families are
//! registered by name in a [`Registry`]; names of the form `family-m`
//! (e.g. `euclidean-3`) pass the component count to the family builder.

mod builtins;
mod checks;
mod polynomial;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use builtins::{
    Decoupled, Euclidean, Free, MixedCubic, NonpotentialTriangular, PowerFirstComponent, ScalarPower,
};
pub use checks::{
    check_homogeneity, check_potential_gradient, lipschitz_bound_fit, lipschitz_ratio,
    sample_ball, sphere_samples, test_defocusing_direction, DefocusingReport,
};
pub use polynomial::{Monomial, PolynomialNonlinearity};

use crate::error::{Error, Result};

/// A degree-5 homogeneous map `f: ℝᵐ → ℝᵐ`, optionally with potential `F` (`f = ∇F`).
pub trait Nonlinearity: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    /// Number of components `m`.
    fn dim(&self) -> usize;

    /// Writes `f(u)` into `out`; both slices have length `dim()`.
    fn eval_into(&self, u: &[f64], out: &mut [f64]);

    /// `F(u)`, or `None` when `f` is not a gradient.
    fn potential(&self, _u: &[f64]) -> Option<f64> {
        None
    }

    fn has_potential(&self) -> bool {
        self.potential(&vec![0.0; self.dim()]).is_some()
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(u, &mut out);
        out
    }
}

pub type VectorNonlinearity = Arc<dyn Nonlinearity>;

/// `F(u)` or [`Error::MissingPotential`].
pub fn require_potential(nl: &dyn Nonlinearity, u: &[f64]) -> Result<f64> {
    nl.potential(u)
        .ok_or_else(|| Error::MissingPotential(nl.name().to_string()))
}

/// Builds members of one named family.
pub trait NonlinearityBuilder: Send + Sync {
    /// Builds the member for component count `dim` (`None` when the name carries no count).
    fn build(&self, dim: Option<usize>) -> Result<VectorNonlinearity>;

    /// Human-readable name pattern, e.g. `euclidean-m`.
    fn pattern(&self) -> String;
}

struct Fixed<F>(&'static str, F);

impl<F> NonlinearityBuilder for Fixed<F>
where
    F: Fn() -> VectorNonlinearity + Send + Sync,
{
    fn build(&self, dim: Option<usize>) -> Result<VectorNonlinearity> {
        match dim {
            None => Ok((self.1)()),
            Some(_) => Err(Error::UnknownName(format!("{}-{}", self.0, dim.unwrap_or(0)))),
        }
    }

    fn pattern(&self) -> String {
        self.0.to_string()
    }
}

struct Sized<F>(&'static str, F);

impl<F> NonlinearityBuilder for Sized<F>
where
    F: Fn(usize) -> VectorNonlinearity + Send + Sync,
{
    fn build(&self, dim: Option<usize>) -> Result<VectorNonlinearity> {
        match dim {
            Some(m) if m >= 1 => Ok((self.1)(m)),
            _ => Err(Error::UnknownName(self.0.to_string())),
        }
    }

    fn pattern(&self) -> String {
        format!("{}-m", self.0)
    }
}

/// Name → builder table.
pub struct Registry {
    families: BTreeMap<String, Box<dyn NonlinearityBuilder>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { families: BTreeMap::new() }
    }

    /// Registry holding every worked example.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("scalar-focusing", Box::new(Fixed("scalar-focusing", || {
            Arc::new(ScalarPower::focusing()) as VectorNonlinearity
        })));
        reg.register("scalar-defocusing", Box::new(Fixed("scalar-defocusing", || {
            Arc::new(ScalarPower::defocusing()) as VectorNonlinearity
        })));
        reg.register("euclidean", Box::new(Sized("euclidean", |m| {
            Arc::new(Euclidean::new(m)) as VectorNonlinearity
        })));
        reg.register("decoupled", Box::new(Sized("decoupled", |m| {
            Arc::new(Decoupled::new(m)) as VectorNonlinearity
        })));
        reg.register("free", Box::new(Sized("free", |m| {
            Arc::new(Free::new(m)) as VectorNonlinearity
        })));
        reg.register("mixed-cubic", Box::new(Fixed("mixed-cubic", || {
            Arc::new(MixedCubic) as VectorNonlinearity
        })));
        reg.register("nonpotential-triangular", Box::new(Fixed("nonpotential-triangular", || {
            Arc::new(NonpotentialTriangular) as VectorNonlinearity
        })));
        reg.register("f-u5u1", Box::new(Fixed("f-u5u1", || {
            Arc::new(PowerFirstComponent) as VectorNonlinearity
        })));
        reg
    }

    pub fn register(&mut self, family: &str, builder: Box<dyn NonlinearityBuilder>) {
        self.families.insert(family.to_string(), builder);
    }

    /// Resolves `name`, splitting a trailing `-<digits>` into a component count.
    pub fn build(&self, name: &str) -> Result<VectorNonlinearity> {
        if let Some(b) = self.families.get(name) {
            return b.build(None);
        }
        if let Some((family, suffix)) = name.rsplit_once('-') {
            if let (Some(b), Ok(m)) = (self.families.get(family), suffix.parse::<usize>()) {
                return b.build(Some(m));
            }
        }
        Err(Error::UnknownName(name.to_string()))
    }

    pub fn patterns(&self) -> Vec<String> {
        self.families.values().map(|b| b.pattern()).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Looks `name` up in the builtin registry.
pub fn builtin(name: &str) -> Result<VectorNonlinearity> {
    Registry::with_builtins().build(name)
}
