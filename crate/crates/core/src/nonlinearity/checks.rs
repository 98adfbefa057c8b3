//! Sampled structural checks on nonlinearities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::{dot, norm};

const BALL_RADIUS: f64 = 10.0;

/// Seeded uniform samples from the ball of radius 10 in ℝᵐ.
pub fn sample_ball(m: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| ball_point(&mut rng, m, BALL_RADIUS)).collect()
}

fn ball_point(rng: &mut ChaCha8Rng, m: usize, radius: f64) -> Vec<f64> {
    let dir = unit_normal(rng, m);
    let r = radius * rng.random::<f64>().powf(1.0 / m as f64);
    dir.into_iter().map(|x| r * x).collect()
}

fn unit_normal(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Deterministic point set on the unit sphere `S^{m-1}`.
///
/// `m = 1` gives `±1`, `m = 2` equispaced angles, `m = 3` a Fibonacci
/// lattice, higher `m` seeded Gaussian directions.
pub fn sphere_samples(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    match m {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    vec![rho * a.cos(), rho * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| unit_normal(&mut rng, m)).collect()
        }
    }
}

/// Max over sampled `(λ, u)` of `|f(λu) − λ⁵f(u)| / (1 + λ⁵|f(u)|)`.
pub fn check_homogeneity(nl: &dyn Nonlinearity, samples: usize, seed: u64) -> f64 {
    let m = nl.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut scaled = vec![0.0; m];
    for _ in 0..samples.max(1) {
        let u = ball_point(&mut rng, m, BALL_RADIUS);
        let lambda = 3.0 * rng.random::<f64>();
        let fu = nl.eval(&u);
        for (s, x) in scaled.iter_mut().zip(&u) {
            *s = lambda * x;
        }
        let fl = nl.eval(&scaled);
        let l5 = lambda.powi(5);
        let diff: Vec<f64> = fl.iter().zip(&fu).map(|(a, b)| a - l5 * b).collect();
        worst = worst.max(norm(&diff) / (1.0 + l5 * norm(&fu)));
    }
    let f0 = nl.eval(&vec![0.0; m]);
    worst.max(norm(&f0))
}

/// Compares `f` with central differences of `F` and checks `u·f(u) = 6F(u)`.
///
/// Both errors are relative, `|a − b| / (1 + |a|)`; the larger is returned.
pub fn check_potential_gradient(
    nl: &dyn Nonlinearity,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !nl.has_potential() {
        return Err(Error::MissingPotential(nl.name().to_string()));
    }
    if !(h > 0.0 && h < 1e-2) {
        return Err(Error::InvalidArgument(format!("step h = {h} outside (0, 1e-2)")));
    }
    let m = nl.dim();
    let pot = |u: &[f64]| super::require_potential(nl, u);
    let mut worst = 0.0f64;
    for u in sample_ball(m, samples.max(1), seed) {
        let f = nl.eval(&u);
        let mut grad = vec![0.0; m];
        let mut probe = u.clone();
        for j in 0..m {
            probe[j] = u[j] + h;
            let fp = pot(&probe)?;
            probe[j] = u[j] - h;
            let fm = pot(&probe)?;
            probe[j] = u[j];
            grad[j] = (fp - fm) / (2.0 * h);
        }
        let diff: Vec<f64> = f.iter().zip(&grad).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / (1.0 + norm(&f)));
        let euler = dot(&u, &f) - 6.0 * pot(&u)?;
        worst = worst.max(euler.abs() / (1.0 + norm(&u) * norm(&f)));
    }
    Ok(worst)
}

/// `|f(u) − f(v)| / ((|u|⁴ + |v|⁴)|u − v|)`, defined as 0 when `u = v`.
pub fn lipschitz_ratio(nl: &dyn Nonlinearity, u: &[f64], v: &[f64]) -> f64 {
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let dn = norm(&d);
    if dn == 0.0 {
        return 0.0;
    }
    let fu = nl.eval(u);
    let fv = nl.eval(v);
    let df: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
    let denom = (norm(u).powi(4) + norm(v).powi(4)) * dn;
    if denom == 0.0 {
        return 0.0;
    }
    norm(&df) / denom
}

/// Smallest sampled `C` with `|f(u) − f(v)| ≤ C(|u|⁴ + |v|⁴)|u − v|`.
///
/// Half the pairs are independent, half are close to the diagonal where
/// the ratio typically peaks.
pub fn lipschitz_bound_fit(nl: &dyn Nonlinearity, samples: usize, seed: u64) -> f64 {
    let m = nl.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = 0.0f64;
    for k in 0..samples.max(1) {
        let u = ball_point(&mut rng, m, BALL_RADIUS);
        let v = if k % 2 == 0 {
            ball_point(&mut rng, m, BALL_RADIUS)
        } else {
            let eps = 0.1 * norm(&u) * rng.random::<f64>();
            let d = ball_point(&mut rng, m, eps.max(1e-12));
            u.iter().zip(&d).map(|(a, b)| a + b).collect()
        };
        c = c.max(lipschitz_ratio(nl, &u, &v));
    }
    c
}

/// Outcome of [`test_defocusing_direction`].
#[derive(Debug, Clone, PartialEq)]
pub struct DefocusingReport {
    pub direction: Vec<f64>,
    /// Largest sampled `(f(u)·ω)(u·ω)`; rounding-level values are flushed to zero.
    pub max_violation: f64,
    pub verdict: bool,
}

/// Samples `(f(u)·ω)(u·ω)` on the unit sphere; `ω` is defocusing iff it never exceeds 0.
pub fn test_defocusing_direction(
    nl: &dyn Nonlinearity,
    omega: &[f64],
    sphere_samples_n: usize,
) -> Result<DefocusingReport> {
    if omega.len() != nl.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction has {} components, nonlinearity has {}",
            omega.len(),
            nl.dim()
        )));
    }
    if (norm(omega) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("|ω| = {} is not 1", norm(omega))));
    }
    let mut max_violation = f64::NEG_INFINITY;
    for u in sphere_samples(nl.dim(), sphere_samples_n.max(1), 0x5eed) {
        let f = nl.eval(&u);
        let mut v = dot(&f, omega) * dot(&u, omega);
        if v.abs() <= 64.0 * f64::EPSILON * (1.0 + norm(&f)) {
            v = 0.0;
        }
        max_violation = max_violation.max(v);
    }
    Ok(DefocusingReport {
        direction: omega.to_vec(),
        max_violation,
        verdict: max_violation <= 0.0,
    })
}
