use super::Nonlinearity;
use crate::norm;

/// `f(u) = ±u⁵`, `F(u) = ±u⁶/6`.
#[derive(Debug, Clone)]
pub struct ScalarPower {
    sign: f64,
    name: &'static str,
}

impl ScalarPower {
    pub fn focusing() -> Self {
        Self { sign: 1.0, name: "scalar-focusing" }
    }

    pub fn defocusing() -> Self {
        Self { sign: -1.0, name: "scalar-defocusing" }
    }
}

impl Nonlinearity for ScalarPower {
    fn name(&self) -> &str {
        self.name
    }

    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let x = u[0];
        let x2 = x * x;
        out[0] = self.sign * x2 * x2 * x;
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        let x2 = u[0] * u[0];
        Some(self.sign * x2 * x2 * x2 / 6.0)
    }
}

/// `f(u) = |u|⁴u`, `F(u) = |u|⁶/6` (focusing sign convention).
#[derive(Debug, Clone)]
pub struct Euclidean {
    m: usize,
    name: String,
}

impl Euclidean {
    pub fn new(m: usize) -> Self {
        Self { m, name: format!("euclidean-{m}") }
    }
}

impl Nonlinearity for Euclidean {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let s = u.iter().map(|x| x * x).sum::<f64>();
        let s2 = s * s;
        for (o, x) in out.iter_mut().zip(u) {
            *o = s2 * x;
        }
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        let s = u.iter().map(|x| x * x).sum::<f64>();
        Some(s * s * s / 6.0)
    }
}

/// Uncoupled focusing components: `f_i(u) = u_i⁵`.
#[derive(Debug, Clone)]
pub struct Decoupled {
    m: usize,
    name: String,
}

impl Decoupled {
    pub fn new(m: usize) -> Self {
        Self { m, name: format!("decoupled-{m}") }
    }
}

impl Nonlinearity for Decoupled {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(u) {
            let x2 = x * x;
            *o = x2 * x2 * x;
        }
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        Some(u.iter().map(|x| x.powi(6)).sum::<f64>() / 6.0)
    }
}

/// `F(u) = u₁³u₂³/3`, `f(u) = (u₁²u₂³, u₁³u₂²)`.
#[derive(Debug, Clone)]
pub struct MixedCubic;

impl Nonlinearity for MixedCubic {
    fn name(&self) -> &str {
        "mixed-cubic"
    }

    fn dim(&self) -> usize {
        2
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let (a, b) = (u[0], u[1]);
        let ab2 = a * a * b * b;
        out[0] = ab2 * b;
        out[1] = ab2 * a;
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        let ab = u[0] * u[1];
        Some(ab * ab * ab / 3.0)
    }
}

/// `f(u) = (u₁⁵, 5u₁⁴u₂)`; homogeneous but not a gradient.
#[derive(Debug, Clone)]
pub struct NonpotentialTriangular;

impl Nonlinearity for NonpotentialTriangular {
    fn name(&self) -> &str {
        "nonpotential-triangular"
    }

    fn dim(&self) -> usize {
        2
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let a4 = u[0].powi(4);
        out[0] = a4 * u[0];
        out[1] = 5.0 * a4 * u[1];
    }
}

/// `F(u) = |u|⁵u₁/6`, `f(u) = |u|⁵e₁/6 + 5|u|³u₁u/6`.
#[derive(Debug, Clone)]
pub struct PowerFirstComponent;

impl Nonlinearity for PowerFirstComponent {
    fn name(&self) -> &str {
        "f-u5u1"
    }

    fn dim(&self) -> usize {
        2
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let r = norm(u);
        let r3 = r * r * r;
        let c = 5.0 / 6.0 * r3 * u[0];
        out[0] = r3 * r * r / 6.0 + c * u[0];
        out[1] = c * u[1];
    }

    fn potential(&self, u: &[f64]) -> Option<f64> {
        Some(norm(u).powi(5) * u[0] / 6.0)
    }
}
/// `f ≡ 0`: the free wave equation, for linear runs and oracles.
#[derive(Debug, Clone)]
pub struct Free {
    m: usize,
    name: String,
}

impl Free {
    pub fn new(m: usize) -> Self {
        Self { m, name: format!("free-{m}") }
    }
}

impl Nonlinearity for Free {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn potential(&self, _u: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

