//! Free radial waves: the exact d'Alembert solution, radiation fields and the
//! exterior energy channel identity.
//!
//! In `w = r·u` the free radial wave equation is the 1-D wave equation on the
//! half-line with `w(t, 0) = 0`, solved exactly by odd extension:
//! `w(t, r) = ½[w₀(r+t) + w₀(r−t)] + ½∫_{r−t}^{r+t} w₁`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::evolution::{exterior_energy, integral_beyond, WaveState, SUPPORT_TOL};
use crate::{fmt17, quad};

/// Largest grid radius where `|u|` or `|u_t|` exceeds [`SUPPORT_TOL`].
pub fn data_support(s: &WaveState) -> f64 {
    (0..s.nr)
        .rev()
        .find(|&i| {
            s.value(i).iter().chain(s.velocity(i)).any(|x| x.abs() > SUPPORT_TOL)
        })
        .map_or(0.0, |i| s.r(i))
}

/// Uniform samples on `[0, R]` continued to `r < 0` with a parity and to
/// `r > R` by zero or by holding the last value.
struct Line {
    samples: Vec<f64>,
    h: f64,
    parity: f64,
    hold: bool,
}

impl Line {
    fn at(&self, j: isize) -> f64 {
        let n = self.samples.len() as isize;
        if j < 0 {
            self.parity * self.at(-j)
        } else if j < n {
            self.samples[j as usize]
        } else if self.hold {
            self.samples[(n - 1) as usize]
        } else {
            0.0
        }
    }

    /// Value and slope of the six-point Lagrange interpolant.
    fn eval(&self, x: f64) -> (f64, f64) {
        let s = x / self.h;
        let j0 = s.floor();
        let theta = s - j0;
        let j0 = j0 as isize;
        let (mut val, mut der) = (0.0, 0.0);
        for k in -2isize..=3 {
            let y = self.at(j0 + k);
            if y == 0.0 {
                continue;
            }
            let (mut num, mut den, mut dnum) = (1.0, 1.0, 0.0);
            for i in -2isize..=3 {
                if i == k {
                    continue;
                }
                let factor = theta - i as f64;
                dnum = dnum * factor + num;
                num *= factor;
                den *= (k - i) as f64;
            }
            val += y * num / den;
            der += y * dnum / den;
        }
        (val, der / self.h)
    }
}

fn w_line(s: &WaveState, k: usize, velocity: bool) -> Line {
    let samples = (0..s.nr)
        .map(|i| s.r(i) * if velocity { s.velocity(i)[k] } else { s.value(i)[k] })
        .collect();
    Line { samples, h: s.dr, parity: -1.0, hold: false }
}

/// `u(0)` of an even function from `u(h)`, `u(2h)`, `u(3h)` (exact for quartics).
fn even_origin(u1: f64, u2: f64, u3: f64) -> f64 {
    (15.0 * u1 - 6.0 * u2 + u3) / 10.0
}

/// Free evolution of `data` by `t` (either sign), ignoring any nonlinearity.
///
/// Exact up to sixth-order interpolation between grid nodes; `u(0)` is
/// closed by even extrapolation.
pub fn dalembert_exact(data: &WaveState, t: f64) -> Result<WaveState> {
    let support = data_support(data);
    if support > data.r_max() - t.abs() {
        return Err(Error::DomainTooSmall { needed: support + t.abs(), available: data.r_max() });
    }
    let (nr, m) = (data.nr, data.m);
    let mut u = vec![0.0; nr * m];
    let mut ut = vec![0.0; nr * m];
    for k in 0..m {
        let w0 = w_line(data, k, false);
        let w1 = w_line(data, k, true);
        let integral = Line {
            samples: quad::cumulative_uniform(&w1.samples, data.dr),
            h: data.dr,
            parity: 1.0,
            hold: true,
        };
        for i in 1..nr {
            let r = data.r(i);
            let (a, b) = (r + t, r - t);
            let (f_a, df_a) = w0.eval(a);
            let (f_b, df_b) = w0.eval(b);
            let w = 0.5 * (f_a + f_b) + 0.5 * (integral.eval(a).0 - integral.eval(b).0);
            let wt = 0.5 * (df_a - df_b) + 0.5 * (w1.eval(a).0 + w1.eval(b).0);
            u[i * m + k] = w / r;
            ut[i * m + k] = wt / r;
        }
        u[k] = even_origin(u[m + k], u[2 * m + k], u[3 * m + k]);
        ut[k] = even_origin(ut[m + k], ut[2 * m + k], ut[3 * m + k]);
    }
    WaveState::new(data.t + t, data.dr, nr, m, u, ut)
}

/// Asymptotic profile `g(η)` of `r·∂ₜu(t, t − η)`.
#[derive(Debug, Clone)]
pub struct RadiationField {
    pub eta_grid: Vec<f64>,
    /// Row-major `eta_grid.len() × m`.
    pub g: Vec<f64>,
    pub m: usize,
    /// `∫|g|² dη` by the trapezoid rule.
    pub l2_mass: f64,
    pub residuals: Vec<RadiationResidual>,
}

/// Per-time distance to the two limits defining `g`, in `L²(dη)` over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiationResidual {
    pub t: f64,
    /// `‖r·∂ₜu(t, t−η) − g(η)‖`.
    pub time: f64,
    /// `‖r·∂ᵣu(t, t−η) + g(η)‖`.
    pub space: f64,
}

impl RadiationField {
    pub fn value(&self, j: usize) -> &[f64] {
        &self.g[j * self.m..(j + 1) * self.m]
    }

    /// `L²(dη)` distance to `other` on the overlap of the two η ranges.
    pub fn distance(&self, other: &RadiationField) -> f64 {
        let lo = self.eta_grid[0].max(other.eta_grid[0]);
        let hi = self.eta_grid.last().unwrap().min(*other.eta_grid.last().unwrap());
        let mut pts = Vec::new();
        for (j, &eta) in self.eta_grid.iter().enumerate() {
            if eta < lo || eta > hi {
                continue;
            }
            let theirs = other.interpolate(eta);
            let d: f64 = self.value(j).iter().zip(&theirs).map(|(a, b)| (a - b).powi(2)).sum();
            pts.push((eta, d));
        }
        trapezoid(&pts).sqrt()
    }

    /// Linear interpolation in η (zero outside the grid).
    pub fn interpolate(&self, eta: f64) -> Vec<f64> {
        let n = self.eta_grid.len();
        if n == 0 || eta < self.eta_grid[0] || eta > self.eta_grid[n - 1] {
            return vec![0.0; self.m];
        }
        let j = self.eta_grid.partition_point(|&e| e <= eta).clamp(1, n - 1);
        let (e0, e1) = (self.eta_grid[j - 1], self.eta_grid[j]);
        let s = if e1 > e0 { (eta - e0) / (e1 - e0) } else { 0.0 };
        (0..self.m).map(|k| (1.0 - s) * self.value(j - 1)[k] + s * self.value(j)[k]).collect()
    }

    /// CSV with columns `eta, g1, …, gm`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["eta".to_string()];
        header.extend((1..=self.m).map(|k| format!("g{k}")));
        writeln!(out, "{}", header.join(","))?;
        for (j, &eta) in self.eta_grid.iter().enumerate() {
            let mut row = vec![fmt17(eta)];
            row.extend(self.value(j).iter().map(|&x| fmt17(x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn trapezoid(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2).map(|p| 0.5 * (p[1].0 - p[0].0) * (p[0].1 + p[1].1)).sum()
}

/// Estimates `g` on `η ∈ window` from late-time states.
///
/// The η grid is induced by the spatial grid of the latest state; each η is
/// averaged over the states whose grid contains `r = t − η > 0`.
pub fn extract_radiation(states: &[WaveState], window: (f64, f64)) -> Result<RadiationField> {
    if states.len() < 2 {
        return Err(Error::InsufficientWindow(states.len()));
    }
    let m = states[0].m;
    if states.iter().any(|s| s.m != m) {
        return Err(Error::InvalidArgument("states have different dimensions".into()));
    }
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    let latest = states.iter().max_by(|a, b| a.t.total_cmp(&b.t)).unwrap();
    let mut eta_grid: Vec<f64> = (0..latest.nr).map(|i| latest.t - latest.r(i)).filter(|e| *e >= lo && *e <= hi).collect();
    eta_grid.reverse();

    // per state, per component: (w_t, w) as interpolable lines
    let lines: Vec<Vec<(Line, Line)>> =
        states.iter().map(|s| (0..m).map(|k| (w_line(s, k, true), w_line(s, k, false))).collect()).collect();
    let covers = |s: &WaveState, eta: f64| {
        let r = s.t - eta;
        r > 0.0 && r <= s.r_max()
    };

    let mut kept_eta = Vec::with_capacity(eta_grid.len());
    let mut g = Vec::with_capacity(eta_grid.len() * m);
    for &eta in &eta_grid {
        let mut sum = vec![0.0; m];
        let mut count = 0usize;
        for (s, comp) in states.iter().zip(&lines) {
            if !covers(s, eta) {
                continue;
            }
            count += 1;
            for k in 0..m {
                sum[k] += comp[k].0.eval(s.t - eta).0;
            }
        }
        if count > 0 {
            kept_eta.push(eta);
            g.extend(sum.iter().map(|x| x / count as f64));
        }
    }

    let mut residuals = Vec::with_capacity(states.len());
    for (s, comp) in states.iter().zip(&lines) {
        let mut time_pts = Vec::new();
        let mut space_pts = Vec::new();
        for (j, &eta) in kept_eta.iter().enumerate() {
            if !covers(s, eta) {
                continue;
            }
            let r = s.t - eta;
            let (mut dt2, mut dr2) = (0.0, 0.0);
            for k in 0..m {
                let gk = g[j * m + k];
                let wt = comp[k].0.eval(r).0;
                let (w, wr) = comp[k].1.eval(r);
                // r·∂ᵣu = ∂ᵣw − w/r
                dt2 += (wt - gk).powi(2);
                dr2 += (wr - w / r + gk).powi(2);
            }
            time_pts.push((eta, dt2));
            space_pts.push((eta, dr2));
        }
        residuals.push(RadiationResidual { t: s.t, time: trapezoid(&time_pts).sqrt(), space: trapezoid(&space_pts).sqrt() });
    }

    let l2_mass = trapezoid(
        &kept_eta
            .iter()
            .enumerate()
            .map(|(j, &e)| (e, g[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>()))
            .collect::<Vec<_>>(),
    );
    Ok(RadiationField { eta_grid: kept_eta, g, m, l2_mass, residuals })
}

/// `∫_R^∞ [(∂ᵣ(r u₀))² + r² u₁²] dr`.
pub fn channel_rhs(data: &WaveState, radius: f64) -> f64 {
    let mut density = vec![0.0; data.nr];
    for k in 0..data.m {
        let w0 = w_line(data, k, false).samples;
        let dw0 = quad::derivative_uniform(&w0, data.dr);
        for i in 0..data.nr {
            let w1 = data.r(i) * data.velocity(i)[k];
            density[i] += dw0[i] * dw0[i] + w1 * w1;
        }
    }
    integral_beyond(&density, data.dr, radius.max(0.0))
}

/// `(lhs, rhs)` of the exterior channel identity: `lhs` sums the energy
/// outside `r = R + |t|` of the free evolution at `t = ±T`, `rhs` is
/// [`channel_rhs`]. The grid is extended with zeros when `T` needs it.
pub fn channel_identity_check(data: &WaveState, radius: f64, t_eval: f64) -> Result<(f64, f64)> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("R must be non-negative, got {radius}")));
    }
    let support = data_support(data);
    if support >= data.r_max() && data.u.iter().chain(&data.ut).any(|x| *x != 0.0) {
        return Err(Error::DomainTooSmall { needed: support + t_eval.abs(), available: data.r_max() });
    }
    // keep the pulse inside 0.9·R_max, where the exterior tail of the state is fitted
    let needed = 1.2 * (support + t_eval.abs()) + 2.0;
    let padded = if data.r_max() < needed { data.extended_to(needed) } else { data.clone() };
    let mut lhs = 0.0;
    for t in [t_eval.abs(), -t_eval.abs()] {
        let s = dalembert_exact(&padded, t)?;
        lhs += exterior_energy(&s, radius + t.abs());
    }
    Ok((lhs, channel_rhs(data, radius)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{bump, norm_hh};

    fn shaped(r_max: f64, nr: usize, f: impl Fn(f64) -> (f64, f64)) -> WaveState {
        WaveState::from_fn(r_max, nr, 1, |r| {
            let (a, b) = f(r);
            (vec![a], vec![b])
        })
        .unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn interpolation_is_exact_for_quintics() {
        let h = 0.1;
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) - 0.1 * x.powi(5);
        let dp = |x: f64| -2.0 + 1.5 * x * x - 0.5 * x.powi(4);
        let line = Line { samples: (0..60).map(|i| p(i as f64 * h)).collect(), h, parity: 1.0, hold: true };
        for x in [0.35, 1.234, 3.0, 4.99] {
            let (v, d) = line.eval(x);
            assert!((v - p(x)).abs() < 1e-11 && (d - dp(x)).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let s = shaped(10.0, 1001, |r| (bump(r, 3.0, 1.0).0, 0.5 * bump(r, 2.5, 1.5).0));
        let out = dalembert_exact(&s, 0.0).unwrap();
        assert!(max_diff(&out.u, &s.u) < 1e-12);
        assert!(max_diff(&out.ut, &s.ut) < 1e-12);
    }

    #[test]
    fn outgoing_profile_translates() {
        // w = φ(r − t) needs w₀ = φ, w₁ = −φ′
        let phi = |r: f64| bump(r, 3.0, 1.0);
        let s = shaped(20.0, 2001, |r| (phi(r).0 / r.max(1e-300), -phi(r).1 / r.max(1e-300)));
        for t in [1.0, 2.37, 6.0] {
            let out = dalembert_exact(&s, t).unwrap();
            let mut worst = 0.0f64;
            for i in 1..s.nr {
                let r = s.r(i);
                let (v, dv) = phi(r - t);
                worst = worst.max((out.value(i)[0] - v / r).abs()).max((out.velocity(i)[0] + dv / r).abs());
            }
            // the bump is only C³ at its edges, which limits the interpolant
            assert!(worst < 1e-5, "t {t}: {worst}");
        }
    }

    #[test]
    fn incoming_wave_reflects_through_the_origin() {
        // w = φ(r + t) − φ(t − r) for r > 0 is the odd continuation of an incoming pulse
        let phi = |x: f64| bump(x, 4.0, 1.0);
        let s = shaped(20.0, 4001, |r| {
            let (a, da) = phi(r);
            (a / r.max(1e-300), da / r.max(1e-300))
        });
        let t = 5.5;
        let out = dalembert_exact(&s, t).unwrap();
        for i in 1..s.nr {
            let r = s.r(i);
            let w = phi(r + t).0 - phi(t - r).0;
            assert!((out.value(i)[0] * r - w).abs() < 1e-5, "r {r}");
        }
    }

    #[test]
    fn free_energy_is_conserved() {
        let s = shaped(30.0, 3001, |r| (bump(r, 3.0, 2.0).0, -0.7 * bump(r, 4.0, 1.0).0));
        let e0 = norm_hh(&s);
        for t in [-4.0, 1.5, 3.0, 7.0, 20.0] {
            let e = norm_hh(&dalembert_exact(&s, t).unwrap());
            assert!((e - e0).abs() < 1e-6 * e0, "t {t}: {e} vs {e0}");
        }
    }

    #[test]
    fn oracle_rejects_small_domains() {
        let s = shaped(10.0, 1001, |r| (bump(r, 3.0, 1.0).0, 0.0));
        assert!(matches!(dalembert_exact(&s, 7.0), Err(Error::DomainTooSmall { .. })));
        assert!(dalembert_exact(&s, -5.5).is_ok());
    }

    fn late_states(data: &WaveState, times: &[f64]) -> Vec<WaveState> {
        let reach = data_support(data) + times.iter().fold(0.0f64, |a, t| a.max(t.abs())) + 2.0;
        let padded = data.extended_to(reach);
        times.iter().map(|&t| dalembert_exact(&padded, t).unwrap()).collect()
    }

    fn battery() -> Vec<WaveState> {
        vec![
            shaped(10.0, 1001, |r| (bump(r, 2.0, 1.0).0, 0.0)),
            shaped(10.0, 1001, |r| (0.0, bump(r, 3.0, 1.5).0)),
            shaped(10.0, 1001, |r| (bump(r, 0.0, 2.0).0, 0.0)),
            shaped(10.0, 1001, |r| (bump(r, 1.5, 1.0).0 - 0.5 * bump(r, 3.0, 1.0).0, 0.3 * bump(r, 2.0, 2.0).0)),
            shaped(10.0, 1001, |r| ((2.0 * r).sin() * bump(r, 2.5, 2.5).0, (3.0 * r).cos() * bump(r, 2.5, 2.0).0)),
            shaped(10.0, 1001, |r| (bump(r, 4.0, 0.7).0, -bump(r, 4.0, 0.7).1)),
        ]
    }

    #[test]
    fn radiation_isometry_battery() {
        for (n, data) in battery().into_iter().enumerate() {
            let states = late_states(&data, &[40.0, 50.0, 60.0]);
            let field = extract_radiation(&states, (-8.0, 8.0)).unwrap();
            let ratio = 2.0 * field.l2_mass / norm_hh(&data);
            assert!((ratio - 1.0).abs() < 0.02, "shape {n}: {ratio}");
        }
    }

    #[test]
    fn zero_data_has_zero_radiation() {
        let data = WaveState::zeros(0.05, 201, 2);
        let states = late_states(&data, &[20.0, 30.0]);
        let field = extract_radiation(&states, (-5.0, 5.0)).unwrap();
        assert!(field.g.iter().all(|x| *x == 0.0));
        assert_eq!(field.l2_mass, 0.0);
        assert!(matches!(extract_radiation(&states[..1], (-5.0, 5.0)), Err(Error::InsufficientWindow(1))));
    }

    #[test]
    fn estimates_converge_in_time() {
        let data = shaped(10.0, 1001, |r| (bump(r, 2.0, 1.0).0, 0.0));
        let single = |t1: f64| {
            let states = late_states(&data, &[t1, t1 + 0.5]);
            extract_radiation(&states, (-4.0, 4.0)).unwrap()
        };
        let exact = single(400.0);
        let d10 = single(10.0).distance(&exact);
        let d40 = single(40.0).distance(&exact);
        // past the support the outgoing profile is exact, up to interpolation
        assert!(d10 < 1e-5 && d40 < 1e-5, "{d10} {d40}");
        // the space residual is ‖u‖ on the window, which decays like 1/t
        let far = single(80.0).residuals[0].space;
        let near = single(20.0).residuals[0].space;
        assert!((near / far - 4.0).abs() < 0.2, "{near} {far}");
    }

    #[test]
    fn channel_identity_trivial_cases() {
        let zero = WaveState::zeros(0.05, 201, 1);
        assert_eq!(channel_identity_check(&zero, 0.0, 5.0).unwrap(), (0.0, 0.0));
        let s = shaped(10.0, 1001, |r| (bump(r, 2.0, 1.0).0, 0.4 * bump(r, 1.5, 1.0).0));
        let rhs0 = channel_rhs(&s, 0.0);
        assert!((rhs0 - norm_hh(&s)).abs() < 1e-6 * rhs0, "{rhs0} {}", norm_hh(&s));
        let mut last = rhs0;
        for k in 1..40 {
            let rhs = channel_rhs(&s, 0.1 * k as f64);
            assert!(rhs <= last + 1e-14 && rhs <= rhs0);
            last = rhs;
        }
    }

    #[test]
    fn channel_identity_converges() {
        let s = shaped(10.0, 2001, |r| (bump(r, 3.0, 2.0).0, 0.5 * bump(r, 2.5, 1.5).0));
        let rho = data_support(&s);
        for radius in [0.0, 1.0, 3.0] {
            let (lhs, rhs) = channel_identity_check(&s, radius, 10.0 * rho).unwrap();
            assert!((lhs - rhs).abs() < 0.02 * rhs, "R {radius}: {lhs} {rhs}");
            let mut last = f64::INFINITY;
            for k in 2..11 {
                let (lhs, rhs) = channel_identity_check(&s, radius, k as f64 * rho).unwrap();
                let gap = (lhs - rhs).abs();
                assert!(gap <= last * (1.0 + 1e-9), "R {radius} T {}: {gap} > {last}", k as f64 * rho);
                last = gap;
            }
        }
    }

    #[test]
    fn radiation_csv_shape() {
        let data = shaped(10.0, 401, |r| (bump(r, 2.0, 1.0).0, 0.0));
        let field = extract_radiation(&late_states(&data, &[20.0, 21.0]), (-3.0, 3.0)).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eta,g1\n"));
        assert_eq!(text.lines().count(), field.eta_grid.len() + 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn isometry_holds_for_random_bumps(
                c0 in 1.0f64..4.0, w0 in 0.5f64..2.0, a0 in -2.0f64..2.0,
                c1 in 1.0f64..4.0, w1 in 0.5f64..2.0, a1 in -2.0f64..2.0,
            ) {
                prop_assume!(a0.abs() + a1.abs() > 0.1);
                let data = shaped(8.0, 801, |r| (a0 * bump(r, c0, w0).0, a1 * bump(r, c1, w1).0));
                let states = late_states(&data, &[30.0, 31.0]);
                let field = extract_radiation(&states, (-7.0, 7.0)).unwrap();
                let ratio = 2.0 * field.l2_mass / norm_hh(&data);
                prop_assert!((ratio - 1.0).abs() < 0.02, "{}", ratio);
            }

            #[test]
            fn oracle_is_time_reversible(t in 0.1f64..5.0, c in 1.5f64..3.0) {
                let data = shaped(20.0, 1001, |r| (bump(r, c, 1.0).0, 0.3 * bump(r, c, 0.8).0));
                let there = dalembert_exact(&data, t).unwrap();
                let back = dalembert_exact(&there, -t).unwrap();
                prop_assert!(max_diff(&back.u[1..], &data.u[1..]) < 1e-4);
            }
        }
    }
}
