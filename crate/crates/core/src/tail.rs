//! Analytic exterior tails `u(r) ≈ θ/r + c/r³` beyond the last sample.
//!
//! Stationary exteriors obey this expansion with `c = −f(θ)/6`; every radial
//! integral truncated at a finite radius is closed with it.

use crate::nonlinearity::Nonlinearity;
use crate::{dot, quad};

#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorTail {
    pub radius: f64,
    pub theta: Vec<f64>,
    pub c: Vec<f64>,
}

impl ExteriorTail {
    pub fn zero(radius: f64, m: usize) -> Self {
        Self { radius, theta: vec![0.0; m], c: vec![0.0; m] }
    }

    /// Matches value and slope at `radius`.
    pub fn from_value_slope(radius: f64, u: &[f64], du: &[f64]) -> Self {
        let r2 = radius * radius;
        let mut theta = Vec::with_capacity(u.len());
        let mut c = Vec::with_capacity(u.len());
        for (x, d) in u.iter().zip(du) {
            let a = radius * x;
            let b = r2 * d;
            let ci = -(a + b) * r2 / 2.0;
            c.push(ci);
            theta.push(a - ci / r2);
        }
        Self { radius, theta, c }
    }

    /// Matches `w = r u` at two radii `r_in < r_out`; the tail starts at `r_out`.
    pub fn from_two_radii(r_in: f64, w_in: &[f64], r_out: f64, w_out: &[f64]) -> Self {
        let denom = 1.0 / (r_in * r_in) - 1.0 / (r_out * r_out);
        let mut theta = Vec::with_capacity(w_in.len());
        let mut c = Vec::with_capacity(w_in.len());
        for (a, b) in w_in.iter().zip(w_out) {
            let ci = (a - b) / denom;
            c.push(ci);
            theta.push(b - ci / (r_out * r_out));
        }
        Self { radius: r_out, theta, c }
    }

    pub fn value(&self, r: f64) -> Vec<f64> {
        let r3 = r * r * r;
        self.theta.iter().zip(&self.c).map(|(t, c)| t / r + c / r3).collect()
    }

    /// `∫_R^∞ |u′|² r² dr`.
    pub fn gradient_energy(&self) -> f64 {
        let r = self.radius;
        let tt = dot(&self.theta, &self.theta);
        let tc = dot(&self.theta, &self.c);
        let cc = dot(&self.c, &self.c);
        tt / r + 2.0 * tc / r.powi(3) + 1.8 * cc / r.powi(5)
    }

    /// `∫_R^∞ F(u) r² dr`, or `None` without a potential.
    pub fn potential_integral(&self, nl: &dyn Nonlinearity) -> Option<f64> {
        let r = self.radius;
        let f_theta = nl.potential(&self.theta)?;
        let grad = nl.eval(&self.theta);
        Some(f_theta / (3.0 * r.powi(3)) + dot(&grad, &self.c) / (5.0 * r.powi(5)))
    }

    /// `∫_R^∞ |u|⁶ r² dr` to leading order.
    pub fn l6_mass(&self) -> f64 {
        dot(&self.theta, &self.theta).powi(3) / (3.0 * self.radius.powi(3))
    }

    /// `∫_R^b weight(r) |u|² r² dr` for a weight vanishing beyond `b`.
    pub fn weighted_l2<W: Fn(f64) -> f64>(&self, weight: W, b: f64) -> f64 {
        if b <= self.radius {
            return 0.0;
        }
        quad::adaptive(
            |r| {
                let v = self.value(r);
                weight(r) * dot(&v, &v) * r * r
            },
            self.radius,
            b,
            1e-12,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_term_tail_recovers_expansion() {
        let (theta, c) = (1.7, -0.4);
        let u = |r: f64| theta / r + c / r.powi(3);
        let du = |r: f64| -theta / (r * r) - 3.0 * c / r.powi(4);
        let t = ExteriorTail::from_value_slope(20.0, &[u(20.0)], &[du(20.0)]);
        assert!((t.theta[0] - theta).abs() < 1e-12);
        assert!((t.c[0] - c).abs() < 1e-10);
        let w = |r: f64| r * u(r);
        let t2 = ExteriorTail::from_two_radii(15.0, &[w(15.0)], 20.0, &[w(20.0)]);
        assert!((t2.theta[0] - theta).abs() < 1e-12);
        let quadrature = quad::adaptive_to_infinity(|r| du(r).powi(2) * r * r, 20.0, 1e-13);
        assert!((t.gradient_energy() - quadrature).abs() < 1e-12);
    }
}
