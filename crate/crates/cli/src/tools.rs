//! Stationary atlas and exterior-channel tables.

use std::io::Write;

use critwave::radiation::channel_identity_check;
use critwave::stationary::{atlas_assumptions, atlas_row, AtlasRow};
use critwave::{fmt17, Nonlinearity};
use rayon::prelude::*;
use serde_json::json;

use crate::scenario::Loaded;

/// `Z_θ` for every charge, computed in parallel and returned in input order.
pub fn atlas(nl: &dyn Nonlinearity, thetas: &[Vec<f64>], tol: f64) -> Vec<AtlasRow> {
    thetas.par_iter().map(|t| atlas_row(nl, t, tol)).collect()
}

pub fn write_atlas<W: Write>(mut out: W, rows: &[AtlasRow]) -> anyhow::Result<()> {
    writeln!(out, "theta,case,r_theta,energy,fit_residual,error")?;
    let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
    for r in rows {
        let theta = r.theta.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(";");
        let case = r.case.map(|c| c.label()).unwrap_or("failed");
        let r_theta = if r.r_theta > 0.0 { fmt17(r.r_theta) } else { String::new() };
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        writeln!(out, "{theta},{case},{r_theta},{},{},{err}", opt(r.energy), opt(r.fit_residual))?;
    }
    Ok(())
}

pub fn assumptions_json(rows: &[AtlasRow]) -> serde_json::Value {
    let rep = atlas_assumptions(rows, 1e-6);
    json!({
        "case_c_rows": rows.iter().filter(|r| r.case == Some(critwave::stationary::Case::CEnergy)).count(),
        "energies": rep.energies.iter().map(|e| fmt17(*e)).collect::<Vec<_>>(),
        "violations": rep.violations,
        "holds": rep.holds(),
    })
}

/// Rows `(R, T, lhs, rhs)` for the scenario's initial data.
pub fn channels(loaded: &Loaded, seed: u64, radii: &[f64], times: &[f64]) -> anyhow::Result<Vec<[f64; 4]>> {
    let data = loaded.initial_state(seed)?;
    let mut rows = Vec::with_capacity(radii.len() * times.len());
    for &r in radii {
        for &t in times {
            let (lhs, rhs) = channel_identity_check(&data, r, t)?;
            rows.push([r, t, lhs, rhs]);
        }
    }
    Ok(rows)
}

pub fn write_channels<W: Write>(mut out: W, rows: &[[f64; 4]]) -> anyhow::Result<()> {
    writeln!(out, "R,T,lhs,rhs")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", fmt17(r[0]), fmt17(r[1]), fmt17(r[2]), fmt17(r[3]))?;
    }
    Ok(())
}
