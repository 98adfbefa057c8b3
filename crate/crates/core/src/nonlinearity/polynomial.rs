use std::collections::BTreeMap;

use super::Nonlinearity;
use crate::error::{Error, Result};

/// One monomial `u^α` with its coefficient vector (one entry per component of `f`).
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeffs: Vec<f64>,
}

/// User-supplied polynomial nonlinearity `f_i(u) = Σ c_{α,i} u^α`, all `|α| = 5`.
///
/// The potential `F = u·f/6` is attached exactly when the Jacobian of `f` is
/// symmetric, checked coefficient-wise at construction.
#[derive(Debug, Clone)]
pub struct PolynomialNonlinearity {
    name: String,
    m: usize,
    terms: Vec<Monomial>,
    gradient: bool,
}

impl PolynomialNonlinearity {
    pub fn new(name: impl Into<String>, m: usize, terms: Vec<Monomial>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidNonlinearity("zero components".into()));
        }
        for (k, t) in terms.iter().enumerate() {
            if t.exponents.len() != m || t.coeffs.len() != m {
                return Err(Error::InvalidNonlinearity(format!(
                    "term {k}: expected {m} exponents and {m} coefficients"
                )));
            }
            let degree: u32 = t.exponents.iter().sum();
            if degree != 5 {
                return Err(Error::InvalidNonlinearity(format!(
                    "term {k}: total degree {degree}, expected 5"
                )));
            }
            if t.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidNonlinearity(format!("term {k}: non-finite coefficient")));
            }
        }
        let gradient = jacobian_is_symmetric(m, &terms);
        Ok(Self { name: name.into(), m, terms, gradient })
    }

    pub fn is_gradient(&self) -> bool {
        self.gradient
    }
}

fn jacobian_is_symmetric(m: usize, terms: &[Monomial]) -> bool {
    // ∂f_i/∂u_j as exponent -> coefficient maps
    let partial = |i: usize, j: usize| {
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in terms {
            let a = t.exponents[j];
            if a == 0 || t.coeffs[i] == 0.0 {
                continue;
            }
            let mut e = t.exponents.clone();
            e[j] -= 1;
            *map.entry(e).or_insert(0.0) += a as f64 * t.coeffs[i];
        }
        map
    };
    let scale = terms
        .iter()
        .flat_map(|t| t.coeffs.iter())
        .fold(0.0f64, |s, c| s.max(c.abs()))
        .max(1.0);
    for i in 0..m {
        for j in i + 1..m {
            let (a, b) = (partial(i, j), partial(j, i));
            let keys: Vec<&Vec<u32>> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let x = a.get(k).copied().unwrap_or(0.0);
                let y = b.get(k).copied().unwrap_or(0.0);
                if (x - y).abs() > 1e-12 * scale {
                    return false;
                }
            }
        }
    }
    true
}

impl Nonlinearity for PolynomialNonlinearity {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let mono: f64 = t
                .exponents
                .iter()
                .zip(u)
                .map(|(&e, &x)| x.powi(e as i32))
                .product();
            for (o, c) in out.iter_mut().zip(&t.coeffs) {
                *o += c * mono;
            }
        }
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        if !self.gradient {
            return None;
        }
        let f = self.eval(u);
        Some(crate::dot(u, &f) / 6.0)
    }

    fn has_potential(&self) -> bool {
        self.gradient
    }
}
