//! Ground states `μωW` from the maximum of `F` on the unit sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{bubble_profile, standard_grid};
use crate::error::{Error, Result};
use crate::nonlinearity::{require_potential, Nonlinearity};
use crate::profile::RadialProfile;
use crate::{dot, norm};

#[derive(Debug, Clone)]
pub struct GroundState {
    pub omega: Vec<f64>,
    pub fmax: f64,
    pub mu: f64,
    pub profile: RadialProfile,
}

const SWEEP_POINTS: usize = 10_000;
const RANDOM_STARTS: usize = 64;
const MAX_ASCENT_STEPS: usize = 20_000;

/// Deterministic points on the unit sphere of ℝᵐ: `±1` for `m = 1`, an
/// equispaced circle for `m = 2`, a Fibonacci lattice for `m = 3` and seeded
/// Gaussian directions above.
pub fn sphere_grid(m: usize, n: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let s = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![s * a.cos(), s * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6a09e667);
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let n = norm(&v);
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    }
}

fn sweep(m: usize) -> Vec<Vec<f64>> {
    sphere_grid(m, if m > 3 { RANDOM_STARTS } else { SWEEP_POINTS })
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn tangent_gradient(nl: &dyn Nonlinearity, w: &[f64]) -> Vec<f64> {
    let g = nl.eval(w);
    let radial = dot(&g, w);
    g.iter().zip(w).map(|(gi, wi)| gi - radial * wi).collect()
}

/// Projected gradient ascent with backtracking; the tangential gradient of
/// `F` at `ω` is `f(ω) − 6F(ω)ω` by Euler's identity.
fn ascend(nl: &dyn Nonlinearity, start: &[f64], tol: f64) -> (Vec<f64>, f64) {
    let potential = |u: &[f64]| nl.potential(u).unwrap_or(f64::NEG_INFINITY);
    let mut w = start.to_vec();
    let mut fw = potential(&w);
    let mut step = 0.1;
    for _ in 0..MAX_ASCENT_STEPS {
        let tangent = tangent_gradient(nl, &w);
        let gnorm = norm(&tangent);
        if gnorm < tol {
            break;
        }
        let mut moved = false;
        while step > 1e-16 {
            let trial = normalized(w.iter().zip(&tangent).map(|(wi, ti)| wi + step * ti).collect());
            let ft = potential(&trial);
            // near the top F stalls at rounding level; accept steps that shrink the gradient instead
            let flat = ft >= fw - 4.0 * f64::EPSILON * fw.abs() && norm(&tangent_gradient(nl, &trial)) < gnorm;
            if ft >= fw + 1e-4 * step * gnorm * gnorm || flat {
                w = trial;
                fw = ft;
                step *= 2.0;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (w, fw)
}

/// Maximizes `F` over the unit sphere; `multistarts` best sweep points are refined.
pub fn ground_state(nl: &dyn Nonlinearity, sphere_tol: f64, multistarts: usize) -> Result<GroundState> {
    let m = nl.dim();
    let mut candidates = sweep(m);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(candidates.len());
    for c in candidates.drain(..) {
        scored.push((require_potential(nl, &c)?, c));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut starts: Vec<Vec<f64>> = scored.into_iter().take(multistarts.max(1)).map(|s| s.1).collect();
    for k in 0..m {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[k] = sign;
            starts.push(e);
        }
    }
    let refined: Vec<(Vec<f64>, f64)> = starts.iter().map(|s| ascend(nl, s, sphere_tol)).collect();
    let best = refined.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return Err(Error::EmptyZ(best));
    }
    // among ties, the lexicographically largest direction
    let tie = 1e-12 * best.abs();
    let omega = refined
        .iter()
        .filter(|r| r.1 >= best - tie)
        .map(|r| &r.0)
        .max_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap()
        .clone();
    let fmax = nl.potential(&omega).unwrap();
    let mu = (6.0 * fmax).powf(-0.25);
    let profile = bubble_profile(&omega, mu, 1.0, &standard_grid())?;
    Ok(GroundState { omega, fmax, mu, profile })
}
