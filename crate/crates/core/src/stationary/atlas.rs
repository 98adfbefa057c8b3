//! Sweeps of `Z_θ` over a grid of charges.

use super::{check_energy_assumptions, compute_z_theta, sphere_grid, w_bubble, AssumptionReport, Case};
use crate::nonlinearity::Nonlinearity;
use crate::profile::RadialProfile;
use crate::{norm, Result};

/// Outcome of one `θ`. Solver failures are kept in `error` instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasRow {
    pub theta: Vec<f64>,
    pub case: Option<Case>,
    pub r_theta: f64,
    pub energy: Option<f64>,
    /// Relative sup distance of a case-C profile to `ωW_(λ)`, see [`bubble_fit_residual`].
    pub fit_residual: Option<f64>,
    pub error: Option<String>,
}

/// `θ = ρω` over `directions` sphere points and the given radii.
pub fn theta_grid(m: usize, directions: usize, radii: &[f64]) -> Vec<Vec<f64>> {
    let dirs = sphere_grid(m, directions);
    let mut out = Vec::with_capacity(dirs.len() * radii.len());
    for omega in &dirs {
        for &rho in radii {
            out.push(omega.iter().map(|x| rho * x).collect());
        }
    }
    out
}

/// `sup_r |p(r) − ωW_(λ)(r)| / |W_(λ)(r)|` with `ω = p(0)/|p(0)|` and `λ = |p(0)|^{-2}`.
pub fn bubble_fit_residual(p: &RadialProfile) -> f64 {
    let u0 = p.eval(0.0).map(|(v, _)| v).unwrap_or_else(|_| p.value(0).to_vec());
    let a = norm(&u0);
    if !(a > 0.0) {
        return f64::INFINITY;
    }
    let lambda = 1.0 / (a * a);
    let mut worst = 0.0f64;
    for (i, &r) in p.grid().iter().enumerate() {
        let w = w_bubble(r, lambda).0;
        let d: Vec<f64> = p.value(i).iter().zip(&u0).map(|(v, o)| v - o / a * w).collect();
        worst = worst.max(norm(&d) / w);
    }
    worst
}

pub fn atlas_row(nl: &dyn Nonlinearity, theta: &[f64], tol: f64) -> AtlasRow {
    let mut row =
        AtlasRow { theta: theta.to_vec(), case: None, r_theta: 0.0, energy: None, fit_residual: None, error: None };
    match compute_z_theta(nl, theta, tol) {
        Ok(sol) => {
            row.case = Some(sol.case);
            row.r_theta = sol.r_theta;
            row.energy = sol.energy;
            if sol.case == Case::CEnergy {
                row.fit_residual = Some(bubble_fit_residual(&sol.profile));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Energies of the case-C rows checked against the energy-set assumptions.
pub fn atlas_assumptions(rows: &[AtlasRow], rel_tol: f64) -> AssumptionReport {
    let energies: Vec<f64> = rows.iter().filter(|r| r.case == Some(Case::CEnergy)).filter_map(|r| r.energy).collect();
    check_energy_assumptions(&energies, rel_tol)
}

/// Sequential sweep; callers wanting parallelism map [`atlas_row`] themselves.
pub fn atlas(nl: &dyn Nonlinearity, thetas: &[Vec<f64>], tol: f64) -> Result<Vec<AtlasRow>> {
    Ok(thetas.iter().map(|t| atlas_row(nl, t, tol)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::stationary::{explicit_w, standard_grid};

    #[test]
    fn exact_w_fits_itself() {
        let w = explicit_w(0.3, &standard_grid()).unwrap();
        assert!(bubble_fit_residual(&w) < 1e-12);
        assert!(bubble_fit_residual(&w.scaled_by(1.01)) > 9e-3);
    }

    #[test]
    fn grid_shape() {
        let g = theta_grid(2, 8, &[0.5, 1.0]);
        assert_eq!(g.len(), 16);
        assert!((norm(&g[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_sweeps() {
        let nl = builtin("euclidean-2").unwrap();
        let rows = atlas(nl.as_ref(), &theta_grid(2, 3, &[0.7, 2.0]), 1e-12).unwrap();
        for r in &rows {
            assert_eq!(r.case, Some(Case::CEnergy), "{r:?}");
            assert!(r.fit_residual.unwrap() < 1e-4, "{r:?}");
        }
        assert_eq!(atlas_assumptions(&rows, 1e-6).energies.len(), 1);
        let defoc = builtin("scalar-defocusing").unwrap();
        let rows = atlas(defoc.as_ref(), &theta_grid(1, 2, &[0.5, 3.0]), 1e-12).unwrap();
        assert!(rows.iter().all(|r| r.case != Some(Case::CEnergy)));
        let tri = builtin("nonpotential-triangular").unwrap();
        assert_eq!(atlas_row(tri.as_ref(), &[0.0, 1.0], 1e-12).case, Some(Case::BNotL6));
    }
}
