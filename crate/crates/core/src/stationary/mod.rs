//! Radial stationary solutions of `−Δu = f(u)`.

mod atlas;
mod exterior;
mod ground;
mod inward;

pub use atlas::{atlas, atlas_assumptions, atlas_row, bubble_fit_residual, theta_grid, AtlasRow};
pub use exterior::{
    contraction_factor, contraction_radius, lipschitz_constant, solve_exterior_fixed_point, CUTOFF_FACTOR,
    POINTS_PER_DECADE,
};
pub use ground::{ground_state, sphere_grid, GroundState};
pub use inward::{continue_inward, Case, ZThetaSolution, BLOWUP_UNDERFLOW_VALUE, BLOWUP_VALUE, R_STOP};

use crate::error::{Error, Result};
use crate::nonlinearity::{require_potential, Nonlinearity};
use crate::profile::{geometric_grid, RadialProfile};
use crate::tail::ExteriorTail;
use crate::norm;

/// `(W_(λ)(r), W_(λ)′(r))` for `W = (1 + r²/3)^{-1/2}`.
pub fn w_bubble(r: f64, lambda: f64) -> (f64, f64) {
    let x = r / lambda;
    let q = 1.0 + x * x / 3.0;
    let v = lambda.powf(-0.5) / q.sqrt();
    (v, -v * x / (3.0 * lambda * q))
}

/// `Y = rW′ + W/2`, the scaling derivative of `W`, and its slope.
pub fn w_scaling_mode(r: f64) -> (f64, f64) {
    let q = 1.0 + r * r / 3.0;
    let y = (0.5 - r * r / 6.0) * q.powf(-1.5);
    let dy = (r.powi(3) / 18.0 - 5.0 * r / 6.0) * q.powf(-2.5);
    (y, dy)
}

/// Origin plus 64 points per decade on `[10⁻⁴, 10⁶]`.
pub fn standard_grid() -> Vec<f64> {
    geometric_grid(1e-4, 1e6, 64, true)
}

pub fn explicit_w(lambda: f64, grid: &[f64]) -> Result<RadialProfile> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {lambda}")));
    }
    RadialProfile::from_fn(grid, 1, |r| {
        let (v, d) = w_bubble(r, lambda);
        (vec![v], vec![d])
    })
}

/// `μ ω W_(λ)`.
pub fn bubble_profile(omega: &[f64], mu: f64, lambda: f64, grid: &[f64]) -> Result<RadialProfile> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {lambda}")));
    }
    RadialProfile::from_fn(grid, omega.len(), |r| {
        let (v, d) = w_bubble(r, lambda);
        (omega.iter().map(|o| mu * o * v).collect(), omega.iter().map(|o| mu * o * d).collect())
    })
}

/// Charge `θ` and radius to start the fixed point from, then the inward solve.
pub fn compute_z_theta(nl: &dyn Nonlinearity, theta: &[f64], tol: f64) -> Result<ZThetaSolution> {
    let r = contraction_radius(nl, theta, 0.25).max(1.0);
    let outer = solve_exterior_fixed_point(nl, theta, r, tol)?;
    continue_inward(nl, &outer, R_STOP)
}

/// `v(r) = p(1/r)/r` on `[1/r₁, 1/r₀]`.
pub fn kelvin_transform(p: &RadialProfile) -> Result<RadialProfile> {
    if p.r_min() <= 0.0 {
        return Err(Error::DomainError);
    }
    let m = p.m();
    let n = p.len();
    let mut grid = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * m);
    let mut derivs = Vec::with_capacity(n * m);
    for i in (0..n).rev() {
        let s = p.grid()[i];
        let r = 1.0 / s;
        grid.push(r);
        for k in 0..m {
            let (u, du) = (p.value(i)[k], p.deriv(i)[k]);
            values.push(s * u);
            derivs.push(-s * s * u - s * s * s * du);
        }
    }
    RadialProfile::new(grid, values, derivs, m)
}

/// `∫|∇p|² − 6∫F(p)` including the exterior tail.
pub fn pohozaev_residual(nl: &dyn Nonlinearity, p: &RadialProfile) -> Result<f64> {
    require_potential(nl, &vec![0.0; nl.dim()])?;
    let pot = p.potential_integral(nl).ok_or_else(|| Error::MissingPotential(nl.name().into()))?;
    Ok(p.gradient_energy() - 6.0 * pot)
}

/// Root mean square of `u″ + (2/r)u′ + f(u)` over the interior nodes.
pub fn stationarity_residual(nl: &dyn Nonlinearity, p: &RadialProfile) -> f64 {
    let m = p.m();
    let second = p.second_derivs();
    let mut fu = vec![0.0; m];
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..p.len() - 1 {
        let r = p.grid()[i];
        nl.eval_into(p.value(i), &mut fu);
        for k in 0..m {
            let res = second[i * m + k] + 2.0 / r * p.deriv(i)[k] + fu[k];
            sum += res * res;
        }
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    (sum / count as f64).sqrt()
}

/// `∫_0^ρ |u′|² r² dr` for any `ρ`, continuing past the grid with the exterior tail.
pub fn cumulative_energy(p: &RadialProfile, rho: f64) -> f64 {
    if rho <= p.r_max() {
        return p.cumulative_gradient_energy(rho);
    }
    let tail = p.tail();
    let beyond = ExteriorTail { radius: rho, ..tail.clone() };
    p.cumulative_gradient_energy(p.r_max()) + tail.gradient_energy() - beyond.gradient_energy()
}

/// Radius `ρ` with `cumulative_energy(p, ρ) = target`, by bisection in `log ρ`.
fn energy_radius(p: &RadialProfile, target: f64) -> f64 {
    let mut lo = if p.r_min() > 0.0 { p.r_min() } else { p.grid()[1] * 1e-6 };
    let mut hi = p.r_max();
    while cumulative_energy(p, hi) < target && hi < 1e300 {
        hi *= 4.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if cumulative_energy(p, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Rescales `p` so that half its gradient energy lies in the unit ball; returns the
/// rescaled profile and the scale `λ` applied (`λ^{-1/2} p(·/λ)`).
pub fn k_normalize(p: &RadialProfile) -> Result<(RadialProfile, f64)> {
    let total = p.gradient_energy();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateProfile);
    }
    let rho = energy_radius(p, 0.5 * total);
    let lambda = 1.0 / rho;
    Ok((p.rescaled(lambda), lambda))
}

/// Smallest radius, up to bisection accuracy, enclosing `3E(Q) − ε` of the
/// gradient energy, with `ε = frac·3E(Q)`. `None` if the profile carries less.
pub fn localization_radius(nl: &dyn Nonlinearity, p: &RadialProfile, frac: f64) -> Option<f64> {
    let e = p.energy(nl)?;
    let target = (1.0 - frac) * 3.0 * e;
    if !(target > 0.0) || target > p.gradient_energy() {
        return None;
    }
    Some(energy_radius(p, target))
}

/// Energy-set assumptions checked on a computed list of stationary energies.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Distinct positive energies `E₁ < … < E_p`.
    pub energies: Vec<f64>,
    /// `(j, α)` with `E_j = Σ α_k E_k` for a nontrivial `α` (1-based `j`).
    pub violations: Vec<(usize, Vec<u32>)>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Clusters `energies` to relative tolerance `rel_tol` and searches each `E_j` for a
/// representation as a nonnegative integer combination of smaller energies.
pub fn check_energy_assumptions(energies: &[f64], rel_tol: f64) -> AssumptionReport {
    let mut sorted: Vec<f64> = energies.iter().copied().filter(|e| e.is_finite() && *e > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    for e in sorted {
        match distinct.last() {
            Some(&last) if (e - last).abs() <= rel_tol * e => {}
            _ => distinct.push(e),
        }
    }
    let mut violations = Vec::new();
    for j in 0..distinct.len() {
        let mut alpha = vec![0u32; distinct.len()];
        if let Some(a) = represent(&distinct[..j], distinct[j], rel_tol * distinct[j], 0, &mut alpha) {
            violations.push((j + 1, a));
        }
    }
    AssumptionReport { energies: distinct, violations }
}

fn represent(basis: &[f64], target: f64, tol: f64, from: usize, alpha: &mut Vec<u32>) -> Option<Vec<u32>> {
    if target.abs() <= tol && alpha.iter().sum::<u32>() >= 2 {
        return Some(alpha.clone());
    }
    for k in from..basis.len() {
        if basis[k] <= target + tol {
            alpha[k] += 1;
            if let Some(a) = represent(basis, target - basis[k], tol, k, alpha) {
                return Some(a);
            }
            alpha[k] -= 1;
        }
    }
    None
}

/// `sup_i |p(rᵢ) − q(rᵢ)|` over the nodes of `p` inside the domain of `q`.
pub fn sup_distance(p: &RadialProfile, q: &RadialProfile) -> f64 {
    let mut worst = 0.0f64;
    for (i, &r) in p.grid().iter().enumerate() {
        if let Ok((v, _)) = q.eval(r) {
            let d: Vec<f64> = p.value(i).iter().zip(&v).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&d));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::quad;

    const E_W: f64 = 0.340_087_4;
    const K_RADIUS: f64 = 5.3296;

    #[test]
    fn w_formulas() {
        let (v, d) = w_bubble(0.0, 1.0);
        assert_eq!((v, d), (1.0, 0.0));
        let r = 1e8;
        assert!((r * w_bubble(r, 1.0).0 - 3f64.sqrt()).abs() < 1e-8);
        // Y = rW' + W/2 with W' from the closed form
        for r in [0.0, 0.3, 2.0, 17.0] {
            let (w, dw) = w_bubble(r, 1.0);
            assert!((w_scaling_mode(r).0 - (r * dw + 0.5 * w)).abs() < 1e-15);
        }
    }

    #[test]
    fn w_energy_and_pohozaev() {
        let nl = builtin("scalar-focusing").unwrap();
        let w = explicit_w(1.0, &standard_grid()).unwrap();
        let grad = quad::adaptive_to_infinity(|r| w_bubble(r, 1.0).1.powi(2) * r * r, 0.0, 1e-13);
        assert!((w.gradient_energy() - grad).abs() < 1e-8 * grad);
        assert!((w.energy(nl.as_ref()).unwrap() - E_W).abs() < 1e-6);
        assert!(pohozaev_residual(nl.as_ref(), &w).unwrap().abs() < 1e-6 * grad);
        let big = w.scaled_by(2.0);
        assert!(pohozaev_residual(nl.as_ref(), &big).unwrap().abs() > 0.1 * grad);
        let zero = w.scaled_by(0.0);
        assert_eq!(pohozaev_residual(nl.as_ref(), &zero).unwrap(), 0.0);
    }

    #[test]
    fn gradient_energy_is_scale_invariant() {
        let g = standard_grid();
        let a = explicit_w(1.0, &g).unwrap().gradient_energy();
        let b = explicit_w(0.01, &g).unwrap().gradient_energy();
        assert!((a - b).abs() < 1e-8 * a);
    }

    #[test]
    fn kelvin_of_w_is_w_third() {
        let grid = geometric_grid(1e-3, 1e3, 400, false);
        let w = explicit_w(1.0, &grid).unwrap();
        let k = kelvin_transform(&w).unwrap();
        let third = explicit_w(1.0 / 3.0, &grid).unwrap();
        let mut worst = 0.0f64;
        for j in 0..1000 {
            let r = 10f64.powf(-2.0 + 4.0 * j as f64 / 999.0);
            worst = worst.max((k.eval(r).unwrap().0[0] - third.eval(r).unwrap().0[0]).abs());
        }
        assert!(worst < 1e-10, "{worst}");
        let back = kelvin_transform(&k).unwrap();
        assert!(sup_distance(&back, &w) < 1e-14);
    }

    #[test]
    fn kelvin_of_pure_charge_is_constant() {
        let grid = geometric_grid(0.1, 10.0, 16, false);
        let p = RadialProfile::from_fn(&grid, 2, |r| (vec![0.0, 1.0 / r], vec![0.0, -1.0 / (r * r)])).unwrap();
        let k = kelvin_transform(&p).unwrap();
        for i in 0..k.len() {
            assert!((k.value(i)[1] - 1.0).abs() < 1e-15 && k.deriv(i)[1].abs() < 1e-14);
        }
        let regular = explicit_w(1.0, &standard_grid()).unwrap();
        assert!(matches!(kelvin_transform(&regular), Err(Error::DomainError)));
    }

    #[test]
    fn stationarity_residuals() {
        let grid = geometric_grid(1e-3, 1e4, 200, true);
        let focusing = builtin("scalar-focusing").unwrap();
        let w = explicit_w(1.0, &grid).unwrap();
        assert!(stationarity_residual(focusing.as_ref(), &w) < 1e-8);

        let tri = builtin("nonpotential-triangular").unwrap();
        let pair = RadialProfile::from_fn(&grid, 2, |r| {
            let (w, dw) = w_bubble(r, 1.0);
            let (y, dy) = w_scaling_mode(r);
            (vec![w, 0.5 * y], vec![dw, 0.5 * dy])
        })
        .unwrap();
        assert!(stationarity_residual(tri.as_ref(), &pair) < 1e-6);

        // W + b with b = e^{-(r-2)²}: the residual is b″ + 2b′/r + (W+b)⁵ − W⁵
        let bumped = RadialProfile::from_fn(&grid, 1, |r| {
            let (w, dw) = w_bubble(r, 1.0);
            let b = (-(r - 2.0).powi(2)).exp();
            (vec![w + 0.1 * b], vec![dw - 0.2 * (r - 2.0) * b])
        })
        .unwrap();
        assert!(stationarity_residual(focusing.as_ref(), &bumped) > 1e-3);
    }

    #[test]
    fn k_normalization_of_the_w_family() {
        let w = explicit_w(1.0, &standard_grid()).unwrap();
        // oracle: the half-energy radius of the closed form
        let total = quad::adaptive_to_infinity(|r| w_bubble(r, 1.0).1.powi(2) * r * r, 0.0, 1e-13);
        let half = |rho: f64| quad::adaptive(|r| w_bubble(r, 1.0).1.powi(2) * r * r, 0.0, rho, 1e-14) - 0.5 * total;
        let (mut a, mut b) = (1.0, 20.0);
        for _ in 0..100 {
            let c = 0.5 * (a + b);
            if half(c) < 0.0 { a = c } else { b = c }
        }
        assert!((a - K_RADIUS).abs() < 1e-3);
        for mu in [0.1, 1.0, 30.0] {
            let p = explicit_w(mu, &standard_grid()).unwrap();
            let (q, lambda) = k_normalize(&p).unwrap();
            // the profile integrates Hermite-interpolated slopes, the oracle the closed form
            assert!((lambda * mu * a - 1.0).abs() < 1e-6, "mu {mu}: {lambda}");
            let (_, again) = k_normalize(&q).unwrap();
            assert!((again - 1.0).abs() < 1e-9);
        }
        assert!(matches!(k_normalize(&w.scaled_by(0.0)), Err(Error::DegenerateProfile)));
    }

    #[test]
    fn localization_radius_exists_for_w() {
        let nl = builtin("scalar-focusing").unwrap();
        let w = explicit_w(1.0, &standard_grid()).unwrap();
        let r = localization_radius(nl.as_ref(), &w, 0.05).unwrap();
        let e = w.energy(nl.as_ref()).unwrap();
        assert!(cumulative_energy(&w, r) >= 0.95 * 3.0 * e * (1.0 - 1e-12));
        assert!(r > 1.0 && r < 1e3);
    }

    #[test]
    fn energy_assumption_search() {
        let ok = check_energy_assumptions(&[1.0, 1.0 + 1e-9, 2.5], 1e-6);
        assert_eq!(ok.energies.len(), 2);
        assert!(ok.holds());
        let bad = check_energy_assumptions(&[1.0, 1.5, 2.5], 1e-9);
        assert_eq!(bad.violations, vec![(3, vec![1, 1, 0])]);
        let double = check_energy_assumptions(&[0.5, 1.0], 1e-9);
        assert_eq!(double.violations, vec![(2, vec![2, 0])]);
        assert!(check_energy_assumptions(&[], 1e-9).holds());
    }
}
