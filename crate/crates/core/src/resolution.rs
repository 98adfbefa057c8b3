//! Soliton-resolution diagnostics: radiation subtraction, bubble scales,
//! profile fitting, energy budgets, the `3E` bound and the virial functional.

use std::io::Write;

use crate::error::{Error, Result};
use crate::evolution::{energy, integrands, integrate_grid, norm_components, norm_hh, running_integral_at, WaveState};
use crate::nonlinearity::{require_potential, Nonlinearity};
use crate::profile::RadialProfile;
use crate::radiation::{dalembert_exact, data_support, extract_radiation, RadiationField};
use crate::stationary::{ground_state, k_normalize, sphere_grid};
use crate::tail::ExteriorTail;
use crate::{dot, fmt17, norm, quad};

/// `∫_{r≤λ} e^{−r−|t|} r² dr`, added to the cumulative energy so that it is
/// strictly increasing in `λ`.
pub fn regularizer(lambda: f64, t: f64) -> f64 {
    let l = lambda.max(0.0);
    if l.is_infinite() {
        return 2.0 * (-t.abs()).exp();
    }
    // 2 − e^{−λ}(λ² + 2λ + 2) loses all digits for small λ; use its series there
    let core = if l < 1e-2 {
        l.powi(3) / 3.0 - l.powi(4) / 4.0 + l.powi(5) / 10.0 - l.powi(6) / 36.0
    } else {
        2.0 - (-l).exp() * (l * l + 2.0 * l + 2.0)
    };
    (-t.abs()).exp() * core
}

/// `λ ↦ ∫_0^λ |∂ᵣu|² r² dr`, continued past `R_max` by the exterior tail.
struct CumulativeGradient {
    cumulative: Vec<f64>,
    density: Vec<f64>,
    dr: f64,
    r_max: f64,
    tail: ExteriorTail,
}

impl CumulativeGradient {
    fn new(s: &WaveState) -> Self {
        let (density, _) = integrands(s);
        Self { cumulative: quad::cumulative_uniform(&density, s.dr), density, dr: s.dr, r_max: s.r_max(), tail: s.tail() }
    }

    fn at(&self, lambda: f64) -> f64 {
        if lambda <= self.r_max {
            return running_integral_at(&self.cumulative, &self.density, self.dr, lambda);
        }
        let beyond = ExteriorTail { radius: lambda, ..self.tail.clone() };
        self.cumulative[self.cumulative.len() - 1] + self.tail.gradient_energy() - beyond.gradient_energy()
    }

    fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1] + self.tail.gradient_energy()
    }
}

/// Scales `λ̃_j` where the regularized cumulative gradient energy of `diff`
/// reaches `3Σ_{k<j}E_k + (3/2)E_j`, found by bisection in `log λ` to relative
/// accuracy `eps`.
///
/// When the energy runs out at some `j`, the error carries the `j − 1` scales found.
pub fn detect_scales(diff: &WaveState, energies: &[f64], eps: f64) -> Result<Vec<f64>> {
    if energies.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("candidate energies must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let g = CumulativeGradient::new(diff);
    let h = |lambda: f64| g.at(lambda) + regularizer(lambda, diff.t);
    let available = g.total() + regularizer(f64::INFINITY, diff.t);
    let mut scales = Vec::with_capacity(energies.len());
    let mut below = 0.0;
    for (j, &e) in energies.iter().enumerate() {
        let target = 3.0 * below + 1.5 * e;
        below += e;
        if target >= available {
            return Err(Error::EnergyBudgetExceeded { j: j + 1, found: j, scales });
        }
        let mut lo = scales.last().copied().unwrap_or(diff.dr * 1e-6);
        let mut hi = lo.max(diff.dr);
        while h(hi) < target {
            if hi > 1e300 {
                return Err(Error::EnergyBudgetExceeded { j: j + 1, found: j, scales });
            }
            lo = hi;
            hi *= 2.0;
        }
        while hi / lo - 1.0 > eps {
            let mid = (lo * hi).sqrt();
            if h(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scales.push((lo * hi).sqrt());
    }
    Ok(scales)
}

/// A K-normalized stationary profile available to the fitter.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: String,
    pub profile: RadialProfile,
    pub energy: f64,
}

impl Candidate {
    /// K-normalizes `profile` and records its energy.
    pub fn new(id: impl Into<String>, profile: &RadialProfile, nl: &dyn Nonlinearity) -> Result<Self> {
        let (profile, _) = k_normalize(profile)?;
        let energy = profile.energy(nl).ok_or_else(|| Error::MissingPotential(nl.name().to_string()))?;
        Ok(Self { id: id.into(), profile, energy })
    }

    /// `(λ^{-1/2}Q(r/λ), λ^{-3/2}Q′(r/λ))`, with the exterior tail past the grid.
    fn rescaled_at(&self, tail: &ExteriorTail, lambda: f64, r: f64, val: &mut [f64], der: &mut [f64]) {
        let x = r / lambda;
        let (a, b) = (lambda.powf(-0.5), lambda.powf(-1.5));
        if x <= self.profile.r_max() {
            let (v, d) = self.profile.eval(x).expect("inside the profile grid");
            for k in 0..val.len() {
                val[k] = a * v[k];
                der[k] = b * d[k];
            }
        } else {
            let (x2, x4) = (x * x, x.powi(4));
            for k in 0..val.len() {
                val[k] = a * (tail.theta[k] / x + tail.c[k] / (x2 * x));
                der[k] = b * (-tail.theta[k] / x2 - 3.0 * tail.c[k] / x4);
            }
        }
    }
}

/// Ground state `±μωW` plus every sphere-grid direction that is itself a
/// critical point of `F` on the sphere (so `μ'ω'W` is stationary), all K-normalized.
pub fn candidate_library(nl: &dyn Nonlinearity, sphere_points: usize) -> Result<Vec<Candidate>> {
    let gs = ground_state(nl, 1e-14, 10)?;
    let grid = crate::stationary::standard_grid();
    let mut out = Vec::new();
    let push = |omega: &[f64], out: &mut Vec<Candidate>| -> Result<()> {
        if out.iter().any(|c: &Candidate| {
            let w0 = c.profile.value(0);
            let n0 = norm(w0);
            n0 > 0.0 && w0.iter().zip(omega).all(|(a, b)| (a / n0 - b).abs() < 1e-9)
        }) {
            return Ok(());
        }
        let f = nl.potential(omega).unwrap_or(0.0);
        let mu = (6.0 * f).powf(-0.25);
        let p = crate::stationary::bubble_profile(omega, mu, 1.0, &grid)?;
        let id = format!("omega=[{}]", omega.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";"));
        out.push(Candidate::new(id, &p, nl)?);
        Ok(())
    };
    let neg: Vec<f64> = gs.omega.iter().map(|x| -x).collect();
    push(&gs.omega, &mut out)?;
    push(&neg, &mut out)?;
    if nl.dim() > 1 {
        for omega in sphere_grid(nl.dim(), sphere_points) {
            let f = nl.potential(&omega).unwrap_or(0.0);
            if !(f > 0.0) {
                continue;
            }
            let g = nl.eval(&omega);
            let radial = dot(&g, &omega);
            let tangential: f64 = g.iter().zip(&omega).map(|(gi, oi)| (gi - radial * oi).powi(2)).sum::<f64>().sqrt();
            if tangential < 1e-8 * radial.abs().max(1e-300) {
                push(&omega, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Result of fitting one detected scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatch {
    /// `λ̃_j` from [`detect_scales`].
    pub detected: f64,
    /// Index into the candidate list.
    pub candidate: usize,
    pub id: String,
    pub lambda: f64,
    /// Relative gradient-norm residual on the annulus of scale `j`.
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    pub t: f64,
    pub j: usize,
    pub scales: Vec<f64>,
    pub matches: Vec<ScaleMatch>,
    /// `½‖(v₀, v₁)‖²` of the radiation, i.e. `∫|g|²`.
    pub radiation_mass: f64,
    /// `½‖(diff − ΣQ_j, ∂ₜdiff)‖²`.
    pub residual_energy: f64,
    pub budget_gap: f64,
}

const SCAN_POINTS: usize = 33;
const GOLDEN_STEPS: usize = 60;
const MAX_ANNULUS_NODES: usize = 4000;

/// Greedy small-to-large least-squares fit of rescaled candidates to `diff`.
///
/// Scale `j` is fitted on the log-midpoint annulus between its neighbours,
/// against `diff` minus the bubbles already fitted, over `λ ∈ [λ̃_j/4, 4λ̃_j]`.
pub fn fit_profiles(diff: &WaveState, scales: &[f64], candidates: &[Candidate]) -> ResolutionReport {
    let (nr, m) = (diff.nr, diff.m);
    let mut grad = vec![0.0; nr * m];
    for k in 0..m {
        let d = quad::derivative_uniform(&diff.component(k), diff.dr);
        for i in 0..nr {
            grad[i * m + k] = d[i];
        }
    }
    let tails: Vec<ExteriorTail> = candidates.iter().map(|c| c.profile.tail()).collect();
    let usable: Vec<usize> = (0..candidates.len()).filter(|&c| candidates[c].profile.m() == m).collect();
    let mut fitted_val = vec![0.0; nr * m];
    let mut fitted_der = vec![0.0; nr * m];
    let mut matches = Vec::new();
    let (mut val, mut der) = (vec![0.0; m], vec![0.0; m]);

    for (j, &lt) in scales.iter().enumerate() {
        let a = if j == 0 { 0.0 } else { (scales[j - 1] * lt).sqrt() };
        let b = if j + 1 == scales.len() { diff.r_max() } else { (scales[j + 1] * lt).sqrt() };
        let first = ((a / diff.dr).ceil() as usize).max(1);
        let last = ((b / diff.dr).floor() as usize).min(nr - 1);
        if first >= last || usable.is_empty() {
            continue;
        }
        let stride = ((last - first) / MAX_ANNULUS_NODES).max(1);
        let nodes: Vec<usize> = (first..=last).step_by(stride).collect();
        let target: Vec<f64> = nodes
            .iter()
            .flat_map(|&i| (0..m).map(move |k| (i, k)))
            .map(|(i, k)| grad[i * m + k] - fitted_der[i * m + k])
            .collect();
        let weights: Vec<f64> = trapezoid_weights(&nodes, diff.dr).iter().zip(&nodes).map(|(w, &i)| w * diff.r(i).powi(2)).collect();
        let denom: f64 = nodes.iter().enumerate().map(|(n, _)| weights[n] * target[n * m..(n + 1) * m].iter().map(|x| x * x).sum::<f64>()).sum();

        let mut objective = |c: usize, lambda: f64| -> f64 {
            let mut acc = 0.0;
            for (n, &i) in nodes.iter().enumerate() {
                candidates[c].rescaled_at(&tails[c], lambda, diff.r(i), &mut val, &mut der);
                let e: f64 = (0..m).map(|k| (target[n * m + k] - der[k]).powi(2)).sum();
                acc += weights[n] * e;
            }
            acc
        };

        let mut best: Option<(usize, f64, f64)> = None;
        for &c in &usable {
            let (lambda, value) = minimize_log(|l| objective(c, l), lt / 4.0, 4.0 * lt);
            if best.map_or(true, |(_, _, v)| value < v) {
                best = Some((c, lambda, value));
            }
        }
        let (c, lambda, value) = best.unwrap();
        let residual = if denom > 0.0 { (value / denom).sqrt() } else { 0.0 };
        for i in 0..nr {
            candidates[c].rescaled_at(&tails[c], lambda, diff.r(i), &mut val, &mut der);
            for k in 0..m {
                fitted_val[i * m + k] += val[k];
                fitted_der[i * m + k] += der[k];
            }
        }
        matches.push(ScaleMatch {
            detected: lt,
            candidate: c,
            id: candidates[c].id.clone(),
            lambda,
            residual,
            energy: candidates[c].energy,
        });
    }

    let mut rest = diff.clone();
    for (x, f) in rest.u.iter_mut().zip(&fitted_val) {
        *x -= f;
    }
    let residual_energy = 0.5 * norm_hh(&rest);
    ResolutionReport {
        t: diff.t,
        j: matches.len(),
        scales: scales.to_vec(),
        matches,
        radiation_mass: 0.0,
        residual_energy,
        budget_gap: 0.0,
    }
}

fn trapezoid_weights(nodes: &[usize], dr: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { (nodes[k] - nodes[k - 1]) as f64 } else { 0.0 };
            let right = if k + 1 < n { (nodes[k + 1] - nodes[k]) as f64 } else { 0.0 };
            0.5 * dr * (left + right)
        })
        .collect()
}

/// Coarse log-spaced scan followed by golden-section refinement around the best point.
fn minimize_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.ln(), hi.ln());
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|k| a + (b - a) * k as f64 / (SCAN_POINTS - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x.exp())).collect();
    let k = vals.iter().enumerate().min_by(|p, q| p.1.total_cmp(q.1)).unwrap().0;
    let (mut l, mut r) = (xs[k.saturating_sub(1)], xs[(k + 1).min(SCAN_POINTS - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = r - phi * (r - l);
    let mut x2 = l + phi * (r - l);
    let (mut f1, mut f2) = (f(x1.exp()), f(x2.exp()));
    for _ in 0..GOLDEN_STEPS {
        if f1 <= f2 {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - phi * (r - l);
            f1 = f(x1.exp());
        } else {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + phi * (r - l);
            f2 = f(x2.exp());
        }
    }
    let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if v <= vals[k] {
        (x.exp(), v)
    } else {
        (xs[k].exp(), vals[k])
    }
}

/// `|ΣE(Q_j) + radiation_mass − E_total|`, also stored in the report.
pub fn energy_budget(report: &mut ResolutionReport, e_total: f64) -> f64 {
    let bubbles: f64 = report.matches.iter().map(|m| m.energy).sum();
    report.budget_gap = (bubbles + report.radiation_mass - e_total).abs();
    report.budget_gap
}

impl ResolutionReport {
    /// One row per fitted scale.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,detected_scale,candidate,fitted_lambda,residual,energy")?;
        for (j, m) in self.matches.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                j + 1,
                fmt17(m.detected),
                m.id,
                fmt17(m.lambda),
                fmt17(m.residual),
                fmt17(m.energy)
            )?;
        }
        Ok(())
    }

    /// Structured text summary (JSON syntax).
    pub fn summary(&self) -> String {
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        format!(
            "{{\"t\": {}, \"J\": {}, \"scales\": {}, \"fitted_lambdas\": {}, \"candidates\": {}, \"residuals\": {}, \
             \"radiation_mass\": {}, \"residual_energy\": {}, \"budget_gap\": {}}}",
            fmt17(self.t),
            self.j,
            list(self.scales.iter().map(|x| fmt17(*x)).collect()),
            list(self.matches.iter().map(|m| fmt17(m.lambda)).collect()),
            list(self.matches.iter().map(|m| format!("\"{}\"", m.id)).collect()),
            list(self.matches.iter().map(|m| fmt17(m.residual)).collect()),
            fmt17(self.radiation_mass),
            fmt17(self.residual_energy),
            fmt17(self.budget_gap),
        )
    }
}

/// Settings for [`analyze`].
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// η range of the radiation field; defaults to the region `r ≥ t/2` of the last state.
    pub window: Option<(f64, f64)>,
    /// Number of late snapshots averaged into the radiation field.
    pub radiation_samples: usize,
    pub eps: f64,
    /// Upper bound on the number of scales searched for.
    pub max_scales: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { window: None, radiation_samples: 4, eps: 1e-10, max_scales: 16 }
    }
}

/// Rebuilds time-zero linear data whose radiation field is `g`:
/// `∂ᵣw₀(η) = −[g(η) + g(−η)]`, `w₁(η) = −[g(η) − g(−η)]`.
pub fn linear_data_from_radiation(field: &RadiationField, dr: f64) -> Result<WaveState> {
    let m = field.m;
    let reach = field.eta_grid.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let nr = ((reach / dr).ceil() as usize + 8).max(8);
    let mut dw0 = vec![vec![0.0; nr]; m];
    let mut w1 = vec![vec![0.0; nr]; m];
    for i in 0..nr {
        let eta = i as f64 * dr;
        let plus = field.interpolate(eta);
        let minus = field.interpolate(-eta);
        for k in 0..m {
            dw0[k][i] = -(plus[k] + minus[k]);
            w1[k][i] = -(plus[k] - minus[k]);
        }
    }
    let mut u = vec![0.0; nr * m];
    let mut ut = vec![0.0; nr * m];
    for k in 0..m {
        let w0 = quad::cumulative_uniform(&dw0[k], dr);
        for i in 1..nr {
            let r = i as f64 * dr;
            u[i * m + k] = w0[i] / r;
            ut[i * m + k] = w1[k][i] / r;
        }
        u[k] = dw0[k][0];
        ut[k] = (4.0 * ut[m + k] - ut[2 * m + k]) / 3.0;
    }
    WaveState::new(0.0, dr, nr, m, u, ut)
}

/// Full post-hoc resolution analysis of a run: radiation from the last
/// snapshots, subtraction of its free evolution, scale detection with the
/// smallest candidate energy, profile fitting and the energy budget against
/// the first snapshot.
pub fn analyze(
    snapshots: &[WaveState],
    nl: &dyn Nonlinearity,
    candidates: &[Candidate],
    opts: &AnalysisOptions,
) -> Result<ResolutionReport> {
    let last = snapshots.last().ok_or(Error::InsufficientWindow(0))?;
    let mut late: Vec<WaveState> =
        snapshots.iter().rev().filter(|s| s.t > 0.0).take(opts.radiation_samples.max(2)).cloned().collect();
    late.reverse();
    let window = opts.window.unwrap_or((last.t - last.r_max(), 0.5 * last.t));
    let field = extract_radiation(&late, window)?;

    let data0 = linear_data_from_radiation(&field, last.dr)?;
    let reach = 1.2 * (data_support(&data0) + last.t.abs()) + 2.0;
    let v_l = dalembert_exact(&data0.extended_to(reach.max(last.r_max())), last.t)?;
    let mut diff = last.clone();
    for (x, v) in diff.u.iter_mut().zip(&v_l.u) {
        *x -= v;
    }
    for (x, v) in diff.ut.iter_mut().zip(&v_l.ut) {
        *x -= v;
    }

    let scales = match candidates.iter().map(|c| c.energy).filter(|e| *e > 0.0).reduce(f64::min) {
        None => Vec::new(),
        Some(e_min) => match detect_scales(&diff, &vec![e_min; opts.max_scales], opts.eps) {
            Ok(s) => s,
            Err(Error::EnergyBudgetExceeded { scales, .. }) => scales,
            Err(e) => return Err(e),
        },
    };
    let mut report = fit_profiles(&diff, &scales, candidates);
    report.radiation_mass = field.l2_mass;
    let e_total = energy(nl, &snapshots[0])?;
    energy_budget(&mut report, e_total);
    Ok(report)
}

/// Cutoff `φ(s)`: one on `s ≤ 2`, zero on `s ≥ 3`, quintic smoothstep between.
pub fn virial_cutoff(s: f64) -> f64 {
    let x = (s - 2.0).clamp(0.0, 1.0);
    1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirialSeries {
    pub times: Vec<f64>,
    /// `∫φ(r/t)|u|² r² dr` (zero at `t = 0`).
    pub y: Vec<f64>,
    /// Three-point second differences; `NaN` at the ends and next to `t ≤ 0`.
    pub ypp_measured: Vec<f64>,
    /// `8‖∂ₜu‖² + 4‖∇u‖² − 12E(u)`.
    pub ypp_predicted: Vec<f64>,
}

impl VirialSeries {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,y,ypp_measured,ypp_predicted")?;
        for i in 0..self.times.len() {
            let meas = if self.ypp_measured[i].is_nan() { "nan".to_string() } else { fmt17(self.ypp_measured[i]) };
            writeln!(out, "{},{},{},{}", fmt17(self.times[i]), fmt17(self.y[i]), meas, fmt17(self.ypp_predicted[i]))?;
        }
        Ok(())
    }
}

/// `y(t) = ∫φ(r/t)|u|² r² dr`, on the grid and past it with the exterior tail.
pub fn virial_y(s: &WaveState) -> f64 {
    if !(s.t > 0.0) {
        return 0.0;
    }
    let reach = 3.0 * s.t;
    let integrand: Vec<f64> = (0..s.nr)
        .map(|i| {
            let r = s.r(i);
            let v = s.value(i);
            virial_cutoff(r / s.t) * dot(v, v) * r * r
        })
        .collect();
    integrate_grid(&integrand, s.dr) + s.tail().weighted_l2(|r| virial_cutoff(r / s.t), reach)
}

/// Virial functional along a run with its measured and predicted second derivatives.
pub fn virial_series(snapshots: &[WaveState], nl: &dyn Nonlinearity) -> Result<VirialSeries> {
    if snapshots.len() < 3 {
        return Err(Error::InsufficientSnapshots(snapshots.len()));
    }
    require_potential(nl, &vec![0.0; snapshots[0].m])?;
    if snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidArgument("snapshot times must increase".into()));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let y: Vec<f64> = snapshots.iter().map(virial_y).collect();
    let mut ypp_measured = vec![f64::NAN; y.len()];
    for i in 1..y.len() - 1 {
        if times[i - 1] <= 0.0 {
            continue;
        }
        let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        ypp_measured[i] = 2.0 * ((y[i + 1] - y[i]) / h2 - (y[i] - y[i - 1]) / h1) / (h1 + h2);
    }
    let mut ypp_predicted = Vec::with_capacity(y.len());
    for s in snapshots {
        let (grad, kin) = norm_components(s);
        ypp_predicted.push(8.0 * kin + 4.0 * grad - 12.0 * energy(nl, s)?);
    }
    Ok(VirialSeries { times, y, ypp_measured, ypp_predicted })
}

/// Ratios `norm_HH/(3E)` along a run, with `E` from the first snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeEBound {
    pub energy: f64,
    pub max_ratio: f64,
    /// Maximum over the last half of the run (by time).
    pub tail_max_ratio: f64,
}

pub fn check_3e_bound(snapshots: &[WaveState], nl: &dyn Nonlinearity) -> Result<ThreeEBound> {
    let first = snapshots.first().ok_or(Error::InsufficientSnapshots(0))?;
    let e = energy(nl, first)?;
    if !(e > 0.0) {
        return Err(Error::NonpositiveEnergy(e));
    }
    let t_mid = 0.5 * (first.t + snapshots.last().unwrap().t);
    let (mut max_ratio, mut tail_max_ratio) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in snapshots {
        let ratio = norm_hh(s) / (3.0 * e);
        max_ratio = max_ratio.max(ratio);
        if s.t >= t_mid {
            tail_max_ratio = tail_max_ratio.max(ratio);
        }
    }
    Ok(ThreeEBound { energy: e, max_ratio, tail_max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::evolution::bump;
    use crate::stationary::{explicit_w, standard_grid, w_bubble};

    const RHO_STAR: f64 = 5.329_645_609;
    const LATE: f64 = 40.0;

    fn e_w() -> f64 {
        3f64.sqrt() * std::f64::consts::PI / 16.0
    }

    fn bubbles(r_max: f64, nr: usize, t: f64, scales: &[f64]) -> WaveState {
        let mut s = WaveState::from_fn(r_max, nr, 1, |r| (vec![scales.iter().map(|&l| w_bubble(r, l).0).sum()], vec![0.0])).unwrap();
        s.t = t;
        s
    }

    fn w_candidates() -> Vec<Candidate> {
        let nl = builtin("scalar-focusing").unwrap();
        let w = explicit_w(1.0, &standard_grid()).unwrap();
        vec![Candidate::new("W", &w, nl.as_ref()).unwrap(), Candidate::new("-W", &w.scaled_by(-1.0), nl.as_ref()).unwrap()]
    }

    #[test]
    fn regularizer_matches_quadrature() {
        for (lambda, t) in [(1e-3, 0.0), (0.5, 1.0), (3.0, 0.0), (40.0, 2.0)] {
            let oracle = quad::adaptive(|r| (-r - t).exp() * r * r, 0.0, lambda, 1e-14);
            assert!((regularizer(lambda, t) - oracle).abs() < 1e-13 * oracle.max(1e-300), "{lambda}");
        }
        assert!((regularizer(f64::INFINITY, 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_bubble_scale_at_late_time() {
        // W_(λ) puts half of its gradient energy inside λ·ρ*
        let s = bubbles(400.0, 40001, LATE, &[1.0 / RHO_STAR]);
        let scales = detect_scales(&s, &[e_w()], 1e-12).unwrap();
        assert!((scales[0] - 1.0).abs() < 1e-3, "{scales:?}");
    }

    #[test]
    fn scales_are_stable_under_refinement() {
        let es = [e_w(), e_w()];
        let coarse = detect_scales(&bubbles(200.0, 20_001, LATE, &[0.1, 10.0]), &es, 1e-12).unwrap();
        let fine = detect_scales(&bubbles(200.0, 40_001, LATE, &[0.1, 10.0]), &es, 1e-12).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a / b - 1.0).abs() < 1e-4, "{coarse:?} {fine:?}");
        }
    }

    #[test]
    fn regularizer_biases_early_times() {
        // at t = 0 the scale solves G(λ) + ∫_0^λ e^{-r}r² dr = (3/2)E(W) with G the closed-form W energy
        let s = bubbles(400.0, 40001, 0.0, &[1.0 / RHO_STAR]);
        let got = detect_scales(&s, &[e_w()], 1e-12).unwrap()[0];
        let g = |lam: f64| quad::adaptive(|r| w_bubble(r, 1.0 / RHO_STAR).1.powi(2) * r * r, 0.0, lam, 1e-13);
        let (mut lo, mut hi) = (0.1, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g(mid) + regularizer(mid, 0.0) < 1.5 * e_w() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((got - lo).abs() < 1e-3 * lo, "{got} vs {lo}");
        assert!(got < 0.9);
    }

    #[test]
    fn zero_diff_exhausts_budget() {
        let mut s = WaveState::zeros(0.1, 101, 1);
        s.t = LATE;
        match detect_scales(&s, &[e_w()], 1e-10) {
            Err(Error::EnergyBudgetExceeded { j, found, scales }) => {
                assert_eq!((j, found), (1, 0));
                assert!(scales.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_bubble_scales_match_superposition_oracle() {
        // independent quadrature of the exact sum W_(0.01) + W_(1): the tail of the
        // inner bubble shifts the second threshold to 0.6577·ρ*
        let s = bubbles(200.0, 200_001, LATE, &[0.01, 1.0]);
        let scales = detect_scales(&s, &[e_w(), e_w()], 1e-12).unwrap();
        assert!((scales[0] / (0.01 * RHO_STAR) - 0.999_737).abs() < 2e-3, "{scales:?}");
        assert!((scales[1] / RHO_STAR - 0.657_653).abs() < 2e-3, "{scales:?}");
    }

    #[test]
    fn fit_recovers_single_w() {
        let s = bubbles(100.0, 10001, LATE, &[0.7]);
        let scales = detect_scales(&s, &[e_w()], 1e-10).unwrap();
        let cands = w_candidates();
        let report = fit_profiles(&s, &scales, &cands);
        assert_eq!(report.j, 1);
        let m = &report.matches[0];
        assert_eq!(m.id, "W");
        assert!((m.lambda - 0.7 * RHO_STAR).abs() < 1e-3 * m.lambda, "{m:?}");
        assert!(m.residual < 1e-4);
        assert!(report.residual_energy < 1e-6);
        // and the flipped bubble picks the flipped candidate
        let mut neg = s.clone();
        neg.u.iter_mut().for_each(|x| *x = -*x);
        assert_eq!(fit_profiles(&neg, &scales, &cands).matches[0].id, "-W");
    }

    #[test]
    fn euclidean_direction_is_recovered() {
        let nl = builtin("euclidean-2").unwrap();
        let cands = candidate_library(nl.as_ref(), 72).unwrap();
        assert!(cands.len() >= 72);
        let angle: f64 = 1.234;
        let lambda0 = 0.8;
        let mut s = WaveState::from_fn(100.0, 10001, 2, |r| {
            let v = w_bubble(r, lambda0).0;
            (vec![angle.cos() * v, angle.sin() * v], vec![0.0, 0.0])
        })
        .unwrap();
        s.t = LATE;
        let scales = detect_scales(&s, &[cands[0].energy], 1e-10).unwrap();
        let report = fit_profiles(&s, &scales, &cands);
        let m = &report.matches[0];
        let w0 = cands[m.candidate].profile.value(0);
        let fitted = w0[1].atan2(w0[0]);
        let err = (fitted - angle).abs().to_degrees();
        assert!(err < 5.0, "{err}");
        assert!((m.lambda / (lambda0 * RHO_STAR) - 1.0).abs() < 0.02, "{m:?}");
    }

    #[test]
    fn mixed_cubic_pair_bubble_leaves_little_energy() {
        let nl = builtin("mixed-cubic").unwrap();
        let cands = candidate_library(nl.as_ref(), 64).unwrap();
        let lambda0 = 1.3;
        let mut s = WaveState::from_fn(120.0, 12001, 2, |r| {
            let v = w_bubble(r, lambda0).0;
            (vec![v, v], vec![0.0, 0.0])
        })
        .unwrap();
        s.t = LATE;
        let e_in = energy(nl.as_ref(), &s).unwrap();
        let scales = detect_scales(&s, &[cands[0].energy], 1e-10).unwrap();
        let report = fit_profiles(&s, &scales, &cands);
        assert!(report.residual_energy < 1e-3 * e_in, "{} vs {e_in}", report.residual_energy);
    }

    #[test]
    fn pure_radiation_has_no_bubbles() {
        let mut s = WaveState::from_fn(20.0, 2001, 1, |r| (vec![0.05 * bump(r, 3.0, 1.0).0], vec![0.0])).unwrap();
        s.t = LATE;
        let scales = match detect_scales(&s, &[e_w()], 1e-10) {
            Err(Error::EnergyBudgetExceeded { scales, .. }) => scales,
            other => panic!("{other:?}"),
        };
        let mut report = fit_profiles(&s, &scales, &w_candidates());
        report.radiation_mass = 0.123;
        assert_eq!(report.j, 0);
        assert!(report.matches.is_empty());
        assert!((energy_budget(&mut report, 0.123)).abs() < 1e-15);
    }

    #[test]
    fn budget_of_a_single_bubble() {
        let nl = builtin("scalar-focusing").unwrap();
        let s = bubbles(100.0, 10001, LATE, &[1.0]);
        let scales = detect_scales(&s, &[e_w()], 1e-10).unwrap();
        let mut report = fit_profiles(&s, &scales, &w_candidates());
        let gap = energy_budget(&mut report, energy(nl.as_ref(), &s).unwrap());
        assert!(gap < 1e-2 * e_w(), "{gap}");
        let mut empty = fit_profiles(&WaveState::zeros(0.1, 101, 1), &[], &w_candidates());
        assert_eq!(energy_budget(&mut empty, 0.0), 0.0);
    }

    #[test]
    fn report_outputs() {
        let s = bubbles(50.0, 5001, LATE, &[1.0]);
        let scales = detect_scales(&s, &[e_w()], 1e-10).unwrap();
        let report = fit_profiles(&s, &scales, &w_candidates());
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("1,"));
        assert!(report.summary().contains("\"J\": 1"));
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(virial_cutoff(0.5), 1.0);
        assert_eq!(virial_cutoff(2.0), 1.0);
        assert_eq!(virial_cutoff(3.0), 0.0);
        assert!((virial_cutoff(2.5) - 0.5).abs() < 1e-15);
        let mut last = 1.0;
        for k in 0..=100 {
            let v = virial_cutoff(2.0 + k as f64 / 100.0);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn virial_of_zero_data() {
        let nl = builtin("scalar-focusing").unwrap();
        let mut snaps = Vec::new();
        for k in 0..4 {
            let mut s = WaveState::zeros(0.1, 101, 1);
            s.t = k as f64;
            snaps.push(s);
        }
        let v = virial_series(&snaps, nl.as_ref()).unwrap();
        assert!(v.y.iter().chain(&v.ypp_predicted).all(|x| *x == 0.0));
        assert!(v.ypp_measured[2] == 0.0 && v.ypp_measured[0].is_nan());
        assert!(matches!(virial_series(&snaps[..2], nl.as_ref()), Err(Error::InsufficientSnapshots(2))));
    }

    #[test]
    fn virial_y_of_w_matches_quadrature() {
        let s = bubbles(40.0, 8001, 5.0, &[1.0]);
        let oracle = quad::adaptive(|r| virial_cutoff(r / 5.0) * w_bubble(r, 1.0).0.powi(2) * r * r, 0.0, 15.0, 1e-13);
        assert!((virial_y(&s) - oracle).abs() < 1e-8 * oracle);
        // beyond the grid the tail carries the rest
        let short = bubbles(12.0, 2401, 5.0, &[1.0]);
        assert!((virial_y(&short) - oracle).abs() < 1e-5 * oracle, "{} {oracle}", virial_y(&short));
    }

    #[test]
    fn three_e_bound_cases() {
        let nl = builtin("scalar-focusing").unwrap();
        let w = bubbles(40.0, 4001, 0.0, &[1.0]);
        let b = check_3e_bound(&[w.clone(), w], nl.as_ref()).unwrap();
        assert!((b.max_ratio - 1.0).abs() < 1e-6 && (b.tail_max_ratio - 1.0).abs() < 1e-6);
        let big = WaveState::from_fn(20.0, 2001, 1, |r| (vec![3.0 * bump(r, 0.0, 2.0).0], vec![0.0])).unwrap();
        assert!(matches!(check_3e_bound(&[big], nl.as_ref()), Err(Error::NonpositiveEnergy(_))));
    }

    #[test]
    fn linear_data_round_trip_through_radiation() {
        let data = WaveState::from_fn(10.0, 1001, 1, |r| (vec![bump(r, 2.0, 1.0).0], vec![0.3 * bump(r, 2.5, 1.0).0])).unwrap();
        let padded = data.extended_to(60.0);
        let states: Vec<WaveState> = [40.0, 41.0].iter().map(|&t| dalembert_exact(&padded, t).unwrap()).collect();
        let field = extract_radiation(&states, (-6.0, 6.0)).unwrap();
        let rebuilt = linear_data_from_radiation(&field, data.dr).unwrap();
        for i in 1..400 {
            assert!((rebuilt.value(i)[0] - data.value(i)[0]).abs() < 1e-4, "u at {}", data.r(i));
            assert!((rebuilt.velocity(i)[0] - data.velocity(i)[0]).abs() < 1e-4, "ut at {}", data.r(i));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn scales_increase_and_follow_rescaling(l1 in 0.05f64..0.2, ratio in 20.0f64..200.0, c in 0.5f64..2.0) {
                let base = bubbles(300.0, 30001, LATE, &[l1, l1 * ratio]);
                let es = [e_w(), e_w()];
                let s0 = detect_scales(&base, &es, 1e-12).unwrap();
                prop_assert!(s0[0] < s0[1]);
                let scaled = bubbles(300.0 * c, 30001, LATE, &[c * l1, c * l1 * ratio]);
                let s1 = detect_scales(&scaled, &es, 1e-12).unwrap();
                for (a, b) in s0.iter().zip(&s1) {
                    prop_assert!((b / a - c).abs() < 1e-3 * c, "{} {} {}", a, b, c);
                }
            }
        }
    }
}
