//! Inward continuation of an exterior solution and the trichotomy at the origin.

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::norm;
use crate::ode::{self, Control, Options, Outcome};
use crate::profile::RadialProfile;

/// How the inward continuation ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Blow-up at a positive radius.
    ABlowup,
    /// Reaches the origin like `c/r`, not in `L⁶`.
    BNotL6,
    /// Regular at the origin, finite energy.
    CEnergy,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::ABlowup => "A_blowup",
            Case::BNotL6 => "B_notL6",
            Case::CEnergy => "C_energy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZThetaSolution {
    pub theta: Vec<f64>,
    /// Blow-up radius for case A, zero otherwise.
    pub r_theta: f64,
    pub case: Case,
    pub profile: RadialProfile,
    /// Defined for case C with a potential.
    pub energy: Option<f64>,
}

pub const R_STOP: f64 = 1e-6;
pub const BLOWUP_VALUE: f64 = 1e8;
/// Underflowing steps count as blow-up once `|u|` exceeds this.
pub const BLOWUP_UNDERFLOW_VALUE: f64 = 1e4;
const RTOL: f64 = 1e-10;
const B_THRESHOLD: f64 = 1e-4;

/// Integrates `u″ + (2/r)u′ + f(u) = 0` inward from the inner edge of `outer`.
pub fn continue_inward(nl: &dyn Nonlinearity, outer: &RadialProfile, r_stop: f64) -> Result<ZThetaSolution> {
    let m = nl.dim();
    if outer.m() != m {
        return Err(Error::InvalidArgument("profile and nonlinearity dimensions differ".into()));
    }
    let r_stop = if r_stop > 0.0 { r_stop } else { R_STOP };
    let theta = outer.asymptotic_charge();
    let r0 = outer.r_min();
    if r_stop >= r0 {
        return Err(Error::InvalidArgument(format!("r_stop {r_stop} must lie inside R = {r0}")));
    }
    let mut y0 = outer.value(0).to_vec();
    y0.extend_from_slice(outer.deriv(0));

    let mut fu = vec![0.0; m];
    let rhs = |r: f64, y: &[f64], dy: &mut [f64]| {
        nl.eval_into(&y[..m], &mut fu);
        for k in 0..m {
            dy[k] = y[m + k];
            dy[m + k] = -2.0 / r * y[m + k] - fu[k];
        }
    };
    let opts = Options { rtol: RTOL, atol: RTOL * 1e-4 * (norm(&y0) + 1e-300), h_init: 1e-3 * r0, ..Default::default() };
    let mut blew_up = false;
    let (traj, outcome) = ode::integrate(rhs, r0, &y0, r_stop, opts, |_, y, _| {
        if !(norm(&y[..m]) <= BLOWUP_VALUE) {
            blew_up = true;
            Control::Stop
        } else {
            Control::Continue
        }
    });

    let (r_end, y_end) = traj.last().map(|(r, y)| (*r, y.clone())).unwrap();
    let case = match outcome {
        Outcome::Stopped if blew_up => Some(Case::ABlowup),
        Outcome::StepUnderflow { t, .. } => {
            let size = norm(&y_end[..m]);
            if size >= BLOWUP_UNDERFLOW_VALUE {
                Some(Case::ABlowup)
            } else {
                return Err(Error::StiffnessFailure { r: t, norm: size });
            }
        }
        Outcome::TooManySteps => return Err(Error::StiffnessFailure { r: r_end, norm: norm(&y_end[..m]) }),
        _ => None,
    };

    // accepted steps in increasing r, without the shared starting node
    let profile_from = |origin: Option<&[f64]>, singular: &[f64]| -> Result<RadialProfile> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        if let Some(u0) = origin {
            grid.push(0.0);
            values.extend_from_slice(u0);
            derivs.extend(std::iter::repeat(0.0).take(m));
        }
        for (r, y) in traj.iter().skip(1).rev() {
            grid.push(*r);
            values.extend((0..m).map(|k| y[k] - singular[k] / r));
            derivs.extend((0..m).map(|k| y[m + k] + singular[k] / (r * r)));
        }
        for i in 0..outer.len() {
            grid.push(outer.grid()[i]);
            values.extend_from_slice(outer.value(i));
            derivs.extend_from_slice(outer.deriv(i));
        }
        RadialProfile::new(grid, values, derivs, m)
    };
    let none = vec![0.0; m];

    if let Some(Case::ABlowup) = case {
        return Ok(ZThetaSolution { theta, r_theta: r_end, case: Case::ABlowup, profile: profile_from(None, &none)?, energy: None });
    }

    let limit = origin_charge(&traj, m);
    if norm(&limit) > B_THRESHOLD * norm(&theta) {
        return Ok(ZThetaSolution { theta, r_theta: 0.0, case: Case::BNotL6, profile: profile_from(None, &none)?, energy: None });
    }
    // Inward integration amplifies the singular mode c/r left by rounding and
    // truncation; its fitted size is far below the case-B threshold but would
    // dominate u near r_stop, so it is removed before closing at the origin.
    let (r_end, y_end) = (r_end, &y_end);
    let u_end: Vec<f64> = (0..m).map(|k| y_end[k] - limit[k] / r_end).collect();
    let du_end: Vec<f64> = (0..m).map(|k| y_end[m + k] + limit[k] / (r_end * r_end)).collect();
    // even reflection: u = u₀ + a r² near the origin
    let u0: Vec<f64> = (0..m).map(|k| u_end[k] - 0.5 * r_end * du_end[k]).collect();
    let profile = profile_from(Some(&u0), &limit)?;
    let energy = profile.energy(nl);
    Ok(ZThetaSolution { theta, r_theta: 0.0, case: Case::CEnergy, profile, energy })
}

/// Intercept of a least-squares line through `r·u(r)` at log-spaced radii in `[10⁻⁶, 10⁻⁴]`.
fn origin_charge(traj: &[(f64, Vec<f64>)], m: usize) -> Vec<f64> {
    let checkpoints: Vec<f64> = (0..5).map(|k| 10f64.powf(-4.0 - 0.5 * k as f64)).collect();
    let mut samples: Vec<(f64, Vec<f64>)> = Vec::new();
    for &rc in &checkpoints {
        // traj is ordered by decreasing r
        let Some(j) = traj.windows(2).position(|w| w[0].0 >= rc && w[1].0 <= rc) else { continue };
        let (ra, ya) = (&traj[j].0, &traj[j].1);
        let (rb, yb) = (&traj[j + 1].0, &traj[j + 1].1);
        let h = rb - ra;
        let t = (rc - ra) / h;
        let (t2, t3) = (t * t, t * t * t);
        let w: Vec<f64> = (0..m)
            .map(|k| {
                let u = (2.0 * t3 - 3.0 * t2 + 1.0) * ya[k]
                    + h * (t3 - 2.0 * t2 + t) * ya[m + k]
                    + (-2.0 * t3 + 3.0 * t2) * yb[k]
                    + h * (t3 - t2) * yb[m + k];
                rc * u
            })
            .collect();
        samples.push((rc, w));
    }
    if samples.len() < 2 {
        return vec![0.0; m];
    }
    let n = samples.len() as f64;
    let mean_r = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let srr: f64 = samples.iter().map(|s| (s.0 - mean_r).powi(2)).sum();
    (0..m)
        .map(|k| {
            let mean_w = samples.iter().map(|s| s.1[k]).sum::<f64>() / n;
            let srw: f64 = samples.iter().map(|s| (s.0 - mean_r) * (s.1[k] - mean_w)).sum();
            mean_w - srw / srr * mean_r
        })
        .collect()
}
