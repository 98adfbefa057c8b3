//! The fixed-point map at infinity, written with single integrals:
//!
//! `Φ(u)(r) = θ/r − (1/r)∫_r^∞ ρ² f(u) dρ + ∫_r^∞ ρ f(u) dρ`,
//! `Φ(u)′(r) = (−θ + ∫_r^∞ ρ² f(u) dρ) / r²`.

use crate::error::{Error, Result};
use crate::nonlinearity::{lipschitz_bound_fit, Nonlinearity};
use crate::profile::{geometric_grid, RadialProfile};
use crate::{norm, quad};

/// Outer truncation relative to the inner radius.
pub const CUTOFF_FACTOR: f64 = 1e6;
pub const POINTS_PER_DECADE: usize = 32;
const MAX_ITER: usize = 500;

/// Fitted constant `C` of `|f(u) − f(v)| ≤ C(|u|⁴ + |v|⁴)|u − v|`.
pub fn lipschitz_constant(nl: &dyn Nonlinearity) -> f64 {
    lipschitz_bound_fit(nl, 4000, 0x5eed)
}

/// Contraction factor `(16/3)·C·|θ|⁴/R²` of the map on the ball `sup r|u| ≤ 2|θ|`.
pub fn contraction_factor(lipschitz: f64, theta: &[f64], r: f64) -> f64 {
    16.0 / 3.0 * lipschitz * norm(theta).powi(4) / (r * r)
}

/// Smallest radius at which the contraction factor is `target`.
pub fn contraction_radius(nl: &dyn Nonlinearity, theta: &[f64], target: f64) -> f64 {
    (16.0 / 3.0 * lipschitz_constant(nl) * norm(theta).powi(4) / target).sqrt()
}

/// Iterates the map from `θ/r` on `[R, 10⁶R]` until `sup r|Δu| < tol`.
pub fn solve_exterior_fixed_point(
    nl: &dyn Nonlinearity,
    theta: &[f64],
    r: f64,
    tol: f64,
) -> Result<RadialProfile> {
    let m = nl.dim();
    if theta.len() != m {
        return Err(Error::InvalidArgument(format!("theta has {} components, nonlinearity {m}", theta.len())));
    }
    if !(r > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need R > 0 and tol > 0".into()));
    }
    let grid = geometric_grid(r, CUTOFF_FACTOR * r, POINTS_PER_DECADE, false);
    let n = grid.len();
    let th = norm(theta);
    let seed = |r: f64| -> (Vec<f64>, Vec<f64>) {
        (theta.iter().map(|t| t / r).collect(), theta.iter().map(|t| -t / (r * r)).collect())
    };
    let mut profile = RadialProfile::from_fn(&grid, m, seed)?;
    if th == 0.0 {
        return Ok(profile);
    }
    let q = contraction_factor(lipschitz_constant(nl), theta, r);
    if q >= 0.5 {
        return Err(Error::ContractionFailure(format!(
            "contraction factor {q:.3} >= 1/2 at R = {r}; increase R"
        )));
    }

    let f_theta = nl.eval(theta);
    let r_cut = grid[n - 1];
    let mut prev_step = f64::INFINITY;
    for _ in 0..MAX_ITER {
        // A(r) = ∫_r^∞ ρ²f, B(r) = ∫_r^∞ ρ f, accumulated from the cutoff inward
        let mut a: Vec<f64> = f_theta.iter().map(|x| x / (2.0 * r_cut * r_cut)).collect();
        let mut b: Vec<f64> = f_theta.iter().map(|x| x / (3.0 * r_cut.powi(3))).collect();
        let mut values = vec![0.0; n * m];
        let mut derivs = vec![0.0; n * m];
        let mut fill = |i: usize, a: &[f64], b: &[f64]| {
            let ri = grid[i];
            for k in 0..m {
                values[i * m + k] = theta[k] / ri - a[k] / ri + b[k];
                derivs[i * m + k] = (a[k] - theta[k]) / (ri * ri);
            }
        };
        fill(n - 1, &a, &b);
        let (x, w) = quad::gl6();
        let mut fu = vec![0.0; m];
        for i in (0..n - 1).rev() {
            let (lo, hi) = (grid[i], grid[i + 1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (xi, wi) in x.iter().zip(w) {
                let rho = mid + half * xi;
                let (u, _) = profile.eval(rho)?;
                nl.eval_into(&u, &mut fu);
                for k in 0..m {
                    a[k] += half * wi * rho * rho * fu[k];
                    b[k] += half * wi * rho * fu[k];
                }
            }
            fill(i, &a, &b);
        }
        let next = RadialProfile::new(grid.clone(), values, derivs, m)?;
        let mut step = 0.0f64;
        let mut size = 0.0f64;
        for i in 0..n {
            let d: Vec<f64> = next.value(i).iter().zip(profile.value(i)).map(|(p, q)| p - q).collect();
            step = step.max(grid[i] * norm(&d));
            size = size.max(grid[i] * norm(next.value(i)));
        }
        if !step.is_finite() || size > 2.0 * th || (step > prev_step && step > 1e-12 * th) {
            return Err(Error::ContractionFailure(format!(
                "iterate left the ball: sup r|u| = {size:.3e}, step {step:.3e}"
            )));
        }
        profile = next;
        if step < tol {
            return Ok(profile);
        }
        prev_step = step;
    }
    Err(Error::ContractionFailure(format!("no convergence in {MAX_ITER} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::stationary::w_bubble;

    #[test]
    fn reproduces_w_outside_fifty() {
        let nl = builtin("scalar-focusing").unwrap();
        let p = solve_exterior_fixed_point(nl.as_ref(), &[3f64.sqrt()], 50.0, 1e-13).unwrap();
        let mut worst = 0.0f64;
        for (i, &r) in p.grid().iter().enumerate() {
            let (w, dw) = w_bubble(r, 1.0);
            worst = worst.max((p.value(i)[0] - w).abs() / w);
            worst = worst.max((p.deriv(i)[0] - dw).abs() / dw.abs());
        }
        // limited by cubic Hermite interpolation of u inside the integrals
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn triangular_charge_on_second_component_is_exact() {
        let nl = builtin("nonpotential-triangular").unwrap();
        let p = solve_exterior_fixed_point(nl.as_ref(), &[0.0, 1.0], 10.0, 1e-14).unwrap();
        for (i, &r) in p.grid().iter().enumerate() {
            assert_eq!(p.value(i)[0], 0.0);
            assert!((p.value(i)[1] * r - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_charge_gives_zero() {
        let nl = builtin("euclidean-3").unwrap();
        let p = solve_exterior_fixed_point(nl.as_ref(), &[0.0; 3], 1.0, 1e-12).unwrap();
        assert!((0..p.len()).all(|i| p.value(i).iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn small_radius_is_rejected() {
        let nl = builtin("scalar-focusing").unwrap();
        let err = solve_exterior_fixed_point(nl.as_ref(), &[3f64.sqrt()], 2.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::ContractionFailure(_)));
    }

    #[test]
    fn asymptotic_rate_and_uniqueness() {
        let nl = builtin("mixed-cubic").unwrap();
        let theta = [1.0, 0.7];
        let r0 = contraction_radius(nl.as_ref(), &theta, 0.25);
        let a = solve_exterior_fixed_point(nl.as_ref(), &theta, r0, 1e-13).unwrap();
        // starting 10 nodes further out makes the two grids share nodes
        let shift = 10;
        let b = solve_exterior_fixed_point(nl.as_ref(), &theta, a.grid()[shift], 1e-13).unwrap();
        let half = a.len() / 2;
        for i in half..a.len() {
            let r = a.grid()[i];
            for k in 0..2 {
                assert!(r.powi(3) * (a.value(i)[k] - theta[k] / r).abs() < 10.0);
                assert!(r.powi(4) * (a.deriv(i)[k] + theta[k] / (r * r)).abs() < 30.0);
            }
        }
        for j in 0..b.len() - shift {
            let r = b.grid()[j];
            assert!((r / a.grid()[j + shift] - 1.0).abs() < 1e-12);
            for k in 0..2 {
                assert!(r * (a.value(j + shift)[k] - b.value(j)[k]).abs() < 1e-10, "r = {r}");
            }
        }
    }
}
