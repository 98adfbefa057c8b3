//! Radial time evolution in the variable `w = r·u`:
//! `w_tt = w_rr + r f(w/r)`, `w(t, 0) = 0`.
//!
//! Diagnostics integrate on the uniform grid with fourth-order stencils and
//! close every integral beyond `R_max` with a static `θ/r + c/r³` tail fitted
//! to `w` at `0.9·R_max` and `R_max`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nonlinearity::{require_potential, Nonlinearity, VectorNonlinearity};
use crate::profile::{read_f64s, read_u32, read_u64, RadialProfile};
use crate::tail::ExteriorTail;
use crate::{dot, fmt17, norm, quad};

const MAGIC: &[u8; 4] = b"CWWS";
const VERSION: u32 = 1;

/// Below this size `u_t` and `u_tt` count as zero when measuring the support of data.
pub const SUPPORT_TOL: f64 = 1e-9;

/// `(u, ∂ₜu)` at time `t` on the uniform grid `rᵢ = i·dr`, `i < nr`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub t: f64,
    pub dr: f64,
    pub nr: usize,
    pub m: usize,
    /// Row-major `nr × m`.
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
}

impl WaveState {
    pub fn new(t: f64, dr: f64, nr: usize, m: usize, u: Vec<f64>, ut: Vec<f64>) -> Result<Self> {
        if !(dr > 0.0) || nr < 8 || m == 0 {
            return Err(Error::InvalidArgument(format!("need dr > 0, nr >= 8, m >= 1 (dr {dr}, nr {nr}, m {m})")));
        }
        if u.len() != nr * m || ut.len() != nr * m {
            return Err(Error::InvalidArgument("state arrays must have nr × m entries".into()));
        }
        if u.iter().chain(&ut).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState(t));
        }
        Ok(Self { t, dr, nr, m, u, ut })
    }

    pub fn zeros(dr: f64, nr: usize, m: usize) -> Self {
        Self { t: 0.0, dr, nr, m, u: vec![0.0; nr * m], ut: vec![0.0; nr * m] }
    }

    /// Grid with `nr` points on `[0, r_max]` sampled from `f(r) -> (u, u_t)`.
    pub fn from_fn<F>(r_max: f64, nr: usize, m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> (Vec<f64>, Vec<f64>),
    {
        let dr = r_max / (nr - 1) as f64;
        let mut u = Vec::with_capacity(nr * m);
        let mut ut = Vec::with_capacity(nr * m);
        for i in 0..nr {
            let (a, b) = f(i as f64 * dr);
            if a.len() != m || b.len() != m {
                return Err(Error::InvalidArgument("data closure returned the wrong dimension".into()));
            }
            u.extend(a);
            ut.extend(b);
        }
        Self::new(0.0, dr, nr, m, u, ut)
    }

    /// Samples a profile (zero outside its domain) as `(p, 0)`.
    pub fn from_profile(p: &RadialProfile, r_max: f64, nr: usize) -> Result<Self> {
        let m = p.m();
        Self::from_fn(r_max, nr, m, |r| {
            let u = p.eval(r).map(|(v, _)| v).unwrap_or_else(|_| vec![0.0; m]);
            (u, vec![0.0; m])
        })
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn r_max(&self) -> f64 {
        self.r(self.nr - 1)
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.u[i * self.m..(i + 1) * self.m]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.ut[i * self.m..(i + 1) * self.m]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.nr).map(|i| norm(self.value(i))).fold(0.0, f64::max)
    }

    /// Component `k` of `u` as a contiguous vector.
    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.nr).map(|i| self.u[i * self.m + k]).collect()
    }

    pub fn velocity_component(&self, k: usize) -> Vec<f64> {
        (0..self.nr).map(|i| self.ut[i * self.m + k]).collect()
    }

    /// Same state on a longer grid (same `dr`) reaching at least `r_max`, padded with zeros.
    /// Only meaningful for data that already vanish near the old edge.
    pub fn extended_to(&self, r_max: f64) -> Self {
        let nr = ((r_max / self.dr).ceil() as usize + 1).max(self.nr);
        let mut out = Self::zeros(self.dr, nr, self.m);
        out.t = self.t;
        out.u[..self.u.len()].copy_from_slice(&self.u);
        out.ut[..self.ut.len()].copy_from_slice(&self.ut);
        out
    }

    /// Static exterior model of `u` beyond `R_max`.
    pub fn tail(&self) -> ExteriorTail {
        let n = self.nr - 1;
        let j = ((0.9 * n as f64).round() as usize).clamp(1, n - 1);
        let w = |i: usize| self.value(i).iter().map(|x| x * self.r(i)).collect::<Vec<_>>();
        ExteriorTail::from_two_radii(self.r(j), &w(j), self.r(n), &w(n))
    }

    /// Radius beyond which the data is at rest and locally stationary, i.e.
    /// `|u_t|` and the discrete `|u_tt|` stay below [`SUPPORT_TOL`] (or the
    /// rounding floor of the stencil, if larger).
    pub fn dynamic_support(&self, nl: &dyn Nonlinearity) -> f64 {
        let w = to_w(&self.u, self.nr, self.m, self.dr);
        let mut acc = vec![0.0; w.len()];
        acceleration(nl, &w, self.nr, self.m, self.dr, &mut acc);
        // the stencil cannot resolve accelerations below its own rounding floor
        let wmax = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let floor = 64.0 * f64::EPSILON * wmax / (self.dr * self.dr);
        let mut support = 0.0;
        for i in 1..self.nr - 1 {
            let r = self.r(i);
            let moving = norm(self.velocity(i)) > SUPPORT_TOL;
            let accel = norm(&acc[i * self.m..(i + 1) * self.m]) > SUPPORT_TOL.max(floor) * r;
            if moving || accel {
                support = r;
            }
        }
        if norm(self.velocity(0)) > SUPPORT_TOL && support == 0.0 {
            support = self.dr;
        }
        support
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&(self.nr as u64).to_le_bytes())?;
        out.write_all(&self.dr.to_le_bytes())?;
        out.write_all(&self.t.to_le_bytes())?;
        for x in self.u.iter().chain(&self.ut) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a wave-state snapshot".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let m = read_u32(&mut input)? as usize;
        let nr = read_u64(&mut input)? as usize;
        let head = read_f64s(&mut input, 2)?;
        let u = read_f64s(&mut input, nr * m)?;
        let ut = read_f64s(&mut input, nr * m)?;
        Self::new(head[1], head[0], nr, m, u, ut)
    }
}

/// Newton projection of `(u, 0)` onto the steady states of the discrete
/// scheme, keeping both boundary values. The result differs from the input
/// by the `O(dr²)` truncation error of the stencil, but it does not feed that
/// error into unstable modes of the evolution.
pub fn relax_stationary(nl: &dyn Nonlinearity, s: &WaveState, tol: f64) -> Result<WaveState> {
    let (nr, m, dr) = (s.nr, s.m, s.dr);
    if nl.dim() != m {
        return Err(Error::InvalidArgument("state and nonlinearity dimensions differ".into()));
    }
    let mut w = to_w(&s.u, nr, m, dr);
    let scale = w.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let inv = 1.0 / (dr * dr);
    let mut acc = vec![0.0; w.len()];
    let n = nr - 2;
    let mut diag = vec![0.0; n * m * m];
    let mut u = vec![0.0; m];
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    // after reaching `tol`, keep polishing while the residual still halves
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..60 {
        acceleration(nl, &w, nr, m, dr, &mut acc);
        let resid = acc.iter().fold(0.0f64, |a, x| a.max(x.abs())) * dr * dr;
        if let Some((b, kept)) = &best {
            if resid > 0.5 * b {
                let w = if resid < *b { &w } else { kept };
                let mut out = s.clone();
                out.u = from_w(w, nr, m, dr);
                out.ut.iter_mut().for_each(|x| *x = 0.0);
                return Ok(out);
            }
        }
        if resid <= tol * scale {
            best = Some((resid, w.clone()));
        }
        // diagonal blocks −2/dr² + f′(u) by central differences of f
        for i in 1..nr - 1 {
            let r = i as f64 * dr;
            for k in 0..m {
                u[k] = w[i * m + k] / r;
            }
            let h = 1e-6 * norm(&u).max(1e-12);
            let block = &mut diag[(i - 1) * m * m..i * m * m];
            for c in 0..m {
                let keep = u[c];
                u[c] = keep + h;
                nl.eval_into(&u, &mut fp);
                u[c] = keep - h;
                nl.eval_into(&u, &mut fm);
                u[c] = keep;
                for row in 0..m {
                    block[row * m + c] = (fp[row] - fm[row]) / (2.0 * h);
                }
            }
            for k in 0..m {
                block[k * m + k] -= 2.0 * inv;
            }
        }
        let rhs: Vec<f64> = acc[m..(nr - 1) * m].iter().map(|x| -x).collect();
        let delta = block_tridiagonal_solve(&diag, inv, &rhs, n, m)
            .ok_or_else(|| Error::ContractionFailure("singular Jacobian in stationary relaxation".into()))?;
        for (x, d) in w[m..(nr - 1) * m].iter_mut().zip(&delta) {
            *x += d;
        }
    }
    Err(Error::ContractionFailure("stationary relaxation did not converge".into()))
}

/// Solves the block system with diagonal blocks `diag` and off-diagonal blocks `off·I`.
fn block_tridiagonal_solve(diag: &[f64], off: f64, rhs: &[f64], n: usize, m: usize) -> Option<Vec<f64>> {
    let mm = m * m;
    // forward sweep: D'_i = D_i − off² D'_{i−1}⁻¹, b'_i = b_i − off D'_{i−1}⁻¹ b'_{i−1}
    let mut dmod = diag.to_vec();
    let mut bmod = rhs.to_vec();
    let mut inverses = vec![0.0; n * mm];
    for i in 0..n {
        if i > 0 {
            let (prev, cur) = inverses.split_at_mut(i * mm);
            let pinv = &prev[(i - 1) * mm..];
            let _ = cur;
            for a in 0..m {
                for b in 0..m {
                    dmod[i * mm + a * m + b] -= off * off * pinv[a * m + b];
                }
                let mut s = 0.0;
                for b in 0..m {
                    s += pinv[a * m + b] * bmod[(i - 1) * m + b];
                }
                bmod[i * m + a] -= off * s;
            }
        }
        let inv = invert(&dmod[i * mm..(i + 1) * mm], m)?;
        inverses[i * mm..(i + 1) * mm].copy_from_slice(&inv);
    }
    let mut x = vec![0.0; n * m];
    for i in (0..n).rev() {
        let inv = &inverses[i * mm..(i + 1) * mm];
        let mut b: Vec<f64> = bmod[i * m..(i + 1) * m].to_vec();
        if i + 1 < n {
            for a in 0..m {
                b[a] -= off * x[(i + 1) * m + a];
            }
        }
        for a in 0..m {
            x[i * m + a] = (0..m).map(|c| inv[a * m + c] * b[c]).sum();
        }
    }
    Some(x)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut a = a.to_vec();
    let mut inv = vec![0.0; m * m];
    for k in 0..m {
        inv[k * m + k] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))?;
        if a[piv * m + col] == 0.0 || !a[piv * m + col].is_finite() {
            return None;
        }
        for c in 0..m {
            a.swap(col * m + c, piv * m + c);
            inv.swap(col * m + c, piv * m + c);
        }
        let p = a[col * m + col];
        for c in 0..m {
            a[col * m + c] /= p;
            inv[col * m + c] /= p;
        }
        for row in 0..m {
            if row != col {
                let f = a[row * m + col];
                if f != 0.0 {
                    for c in 0..m {
                        a[row * m + c] -= f * a[col * m + c];
                        inv[row * m + c] -= f * inv[col * m + c];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn to_w(u: &[f64], nr: usize, m: usize, dr: f64) -> Vec<f64> {
    let mut w = u.to_vec();
    for i in 0..nr {
        let r = i as f64 * dr;
        w[i * m..(i + 1) * m].iter_mut().for_each(|x| *x *= r);
    }
    w
}

/// `u = w/r` with `u(0) = (4u(dr) − u(2dr))/3` from evenness.
fn from_w(w: &[f64], nr: usize, m: usize, dr: f64) -> Vec<f64> {
    let mut u = w.to_vec();
    for i in 1..nr {
        let r = i as f64 * dr;
        u[i * m..(i + 1) * m].iter_mut().for_each(|x| *x /= r);
    }
    for k in 0..m {
        u[k] = (4.0 * u[m + k] - u[2 * m + k]) / 3.0;
    }
    u
}

/// `w_rr + r f(w/r)` at interior nodes; zero at both ends (both are held fixed).
fn acceleration(nl: &dyn Nonlinearity, w: &[f64], nr: usize, m: usize, dr: f64, out: &mut [f64]) {
    let inv = 1.0 / (dr * dr);
    let mut u = vec![0.0; m];
    let mut fu = vec![0.0; m];
    out[..m].iter_mut().for_each(|x| *x = 0.0);
    out[(nr - 1) * m..].iter_mut().for_each(|x| *x = 0.0);
    for i in 1..nr - 1 {
        let r = i as f64 * dr;
        for k in 0..m {
            u[k] = w[i * m + k] / r;
        }
        nl.eval_into(&u, &mut fu);
        for k in 0..m {
            let j = i * m + k;
            out[j] = (w[j + m] - 2.0 * w[j] + w[j - m]) * inv + r * fu[k];
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub nl: VectorNonlinearity,
    pub dt: f64,
    /// Final time `T`.
    pub t_final: f64,
    pub snapshot_every: usize,
    pub cfl: f64,
    pub blowup_threshold: f64,
}

impl EvolveConfig {
    pub const DEFAULT_CFL: f64 = 0.9;
    pub const DEFAULT_BLOWUP: f64 = 1e6;

    /// `dt = cfl·dr` with the default CFL number and blow-up threshold.
    pub fn new(nl: VectorNonlinearity, dr: f64, t_final: f64, snapshot_every: usize) -> Self {
        Self {
            nl,
            dt: Self::DEFAULT_CFL * dr,
            t_final,
            snapshot_every: snapshot_every.max(1),
            cfl: Self::DEFAULT_CFL,
            blowup_threshold: Self::DEFAULT_BLOWUP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    BlowupDetected,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Completed => 0,
            Outcome::BlowupDetected => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub state: WaveState,
    /// Every `snapshot_every` steps, starting with the initial state and ending with the last.
    pub snapshots: Vec<WaveState>,
    pub outcome: Outcome,
}

/// Leapfrog (velocity Verlet) evolution to `cfg.t_final`.
///
/// Requires `dt ≤ cfl·dr` and `R_max ≥ support + T + 1`, where the support is
/// [`WaveState::dynamic_support`].
pub fn evolve(cfg: &EvolveConfig, initial: &WaveState) -> Result<EvolveResult> {
    if !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {}", cfg.cfl)));
    }
    if cfg.dt > cfg.cfl * initial.dr * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "dt = {} exceeds cfl·dr = {}",
            cfg.dt,
            cfg.cfl * initial.dr
        )));
    }
    let needed = initial.dynamic_support(cfg.nl.as_ref()) + cfg.t_final.abs() + 1.0;
    if initial.r_max() < needed {
        return Err(Error::DomainTooSmall { needed, available: initial.r_max() });
    }
    evolve_unchecked(cfg, initial)
}

/// [`evolve`] without the CFL and domain checks.
pub fn evolve_unchecked(cfg: &EvolveConfig, initial: &WaveState) -> Result<EvolveResult> {
    let (nr, m, dr) = (initial.nr, initial.m, initial.dr);
    if cfg.nl.dim() != m {
        return Err(Error::InvalidArgument("state and nonlinearity dimensions differ".into()));
    }
    if !(cfg.dt > 0.0) || !cfg.t_final.is_finite() || cfg.t_final < 0.0 {
        return Err(Error::InvalidArgument("need dt > 0 and a finite T >= 0".into()));
    }
    let steps = (cfg.t_final / cfg.dt).ceil() as usize;
    let dt = if steps == 0 { 0.0 } else { cfg.t_final / steps as f64 };
    let nl = cfg.nl.as_ref();
    let mut w = to_w(&initial.u, nr, m, dr);
    let mut v = to_w(&initial.ut, nr, m, dr);
    // both ends are Dirichlet nodes: r = 0 exactly, R_max frozen at its initial value
    v[..m].iter_mut().for_each(|x| *x = 0.0);
    v[(nr - 1) * m..].iter_mut().for_each(|x| *x = 0.0);
    let mut acc = vec![0.0; w.len()];
    acceleration(nl, &w, nr, m, dr, &mut acc);

    let make_state = |t: f64, w: &[f64], v: &[f64]| WaveState {
        t: initial.t + t,
        dr,
        nr,
        m,
        u: from_w(w, nr, m, dr),
        ut: {
            let mut ut = from_w(v, nr, m, dr);
            if v.iter().skip((nr - 1) * m).all(|x| *x == 0.0) {
                // the frozen boundary keeps the initial velocity data for reporting
                ut[(nr - 1) * m..].copy_from_slice(&initial.ut[(nr - 1) * m..]);
            }
            ut
        },
    };
    let mut snapshots = vec![initial.clone()];
    let every = cfg.snapshot_every.max(1);
    for step in 1..=steps {
        for j in m..(nr - 1) * m {
            v[j] += 0.5 * dt * acc[j];
            w[j] += dt * v[j];
        }
        acceleration(nl, &w, nr, m, dr, &mut acc);
        for j in m..(nr - 1) * m {
            v[j] += 0.5 * dt * acc[j];
        }
        let t = step as f64 * dt;
        let mut sup = 0.0f64;
        for i in 1..nr {
            let r = i as f64 * dr;
            for k in 0..m {
                let x = w[i * m + k];
                if !x.is_finite() {
                    return Err(Error::NonFiniteState(initial.t + t));
                }
                sup = sup.max((x / r).abs());
            }
        }
        if sup > cfg.blowup_threshold {
            let state = make_state(t, &w, &v);
            snapshots.push(state.clone());
            return Ok(EvolveResult { state, snapshots, outcome: Outcome::BlowupDetected });
        }
        if step % every == 0 || step == steps {
            snapshots.push(make_state(t, &w, &v));
        }
    }
    let state = snapshots.last().cloned().unwrap();
    Ok(EvolveResult { state, snapshots, outcome: Outcome::Completed })
}

/// Per-node integrands on the grid: `|u_r|² r²`, `|u_t|² r²`.
pub(crate) fn integrands(s: &WaveState) -> (Vec<f64>, Vec<f64>) {
    let mut grad = vec![0.0; s.nr];
    for k in 0..s.m {
        let d = quad::derivative_uniform(&s.component(k), s.dr);
        for i in 0..s.nr {
            grad[i] += d[i] * d[i];
        }
    }
    let mut kin = vec![0.0; s.nr];
    for i in 0..s.nr {
        let r2 = s.r(i) * s.r(i);
        grad[i] *= r2;
        let v = s.velocity(i);
        kin[i] = dot(v, v) * r2;
    }
    (grad, kin)
}

pub(crate) fn integrate_grid(values: &[f64], h: f64) -> f64 {
    quad::gregory_weights(values.len(), h).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `(∫|u_r|² r² dr, ∫|u_t|² r² dr)` over the whole half-line.
pub fn norm_components(s: &WaveState) -> (f64, f64) {
    let (grad, kin) = integrands(s);
    (integrate_grid(&grad, s.dr) + s.tail().gradient_energy(), integrate_grid(&kin, s.dr))
}

/// `∫(|u_r|² + |u_t|²) r² dr` over the whole half-line.
pub fn norm_hh(s: &WaveState) -> f64 {
    let (grad, kin) = norm_components(s);
    grad + kin
}

/// `½∫|u_r|² + ½∫|u_t|² − ∫F(u)` (all with weight `r²`, no `4π`).
pub fn energy(nl: &dyn Nonlinearity, s: &WaveState) -> Result<f64> {
    require_potential(nl, &vec![0.0; s.m])?;
    let pot: Vec<f64> = (0..s.nr).map(|i| nl.potential(s.value(i)).unwrap() * s.r(i) * s.r(i)).collect();
    let tail = s.tail();
    let pot_total = integrate_grid(&pot, s.dr) + tail.potential_integral(nl).unwrap_or(0.0);
    Ok(0.5 * norm_hh(s) - pot_total)
}

/// `∫_{r>R}(|u_t|² + |u_r|²) r² dr`.
pub fn exterior_energy(s: &WaveState, radius: f64) -> f64 {
    let (grad, kin) = integrands(s);
    let density: Vec<f64> = grad.iter().zip(&kin).map(|(a, b)| a + b).collect();
    if radius >= s.r_max() {
        let beyond = ExteriorTail { radius, ..s.tail() };
        return beyond.gradient_energy();
    }
    integral_beyond(&density, s.dr, radius) + s.tail().gradient_energy()
}

/// `∫_R^{R_max}` of grid samples.
pub(crate) fn integral_beyond(density: &[f64], dr: f64, radius: f64) -> f64 {
    let cumulative = quad::cumulative_uniform(density, dr);
    let total = cumulative[density.len() - 1];
    (total - running_integral_at(&cumulative, density, dr, radius)).max(0.0)
}

/// Running integral at any `x` by cubic Hermite interpolation between nodes,
/// using that its slope is the density; clamped to `[0, R_max]`.
pub(crate) fn running_integral_at(cumulative: &[f64], density: &[f64], dr: f64, x: f64) -> f64 {
    let n = density.len();
    let s = x / dr;
    if s <= 0.0 {
        return 0.0;
    }
    if s >= (n - 1) as f64 {
        return cumulative[n - 1];
    }
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * cumulative[i]
        + dr * (t3 - 2.0 * t2 + t) * density[i]
        + (-2.0 * t3 + 3.0 * t2) * cumulative[i + 1]
        + dr * (t3 - t2) * density[i + 1]
}

/// Smooth compactly supported bump `(1 − x²)⁴`, `x = (r − center)/width`,
/// and its derivative.
pub fn bump(r: f64, center: f64, width: f64) -> (f64, f64) {
    let x = (r - center) / width;
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - x * x;
    (q.powi(4), -8.0 * x * q.powi(3) / width)
}

/// One CSV row per snapshot: `t, E, norm_HH, ext(R) for each R, sup|u|`.
pub fn write_time_series<W: Write>(
    mut out: W,
    nl: &dyn Nonlinearity,
    snapshots: &[WaveState],
    radii: &[f64],
) -> Result<()> {
    let mut header = vec!["t".to_string(), "E".into(), "norm_HH".into()];
    header.extend(radii.iter().map(|r| format!("ext_{r}")));
    header.push("sup_u".into());
    writeln!(out, "{}", header.join(","))?;
    for s in snapshots {
        let e = energy(nl, s).map(fmt17).unwrap_or_else(|_| "nan".into());
        let mut row = vec![fmt17(s.t), e, fmt17(norm_hh(s))];
        row.extend(radii.iter().map(|&r| fmt17(exterior_energy(s, r))));
        row.push(fmt17(s.sup_norm()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::stationary::{explicit_w, standard_grid, w_bubble};

    const E_W: f64 = 0.340_087_4;

    fn w_state(r_max: f64, nr: usize) -> WaveState {
        WaveState::from_fn(r_max, nr, 1, |r| (vec![w_bubble(r, 1.0).0], vec![0.0])).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let nl = builtin("scalar-focusing").unwrap();
        let s = WaveState::zeros(0.05, 201, 1);
        let cfg = EvolveConfig::new(nl.clone(), s.dr, 2.0, 10);
        let res = evolve(&cfg, &s).unwrap();
        assert_eq!(res.outcome, Outcome::Completed);
        assert!(res.state.u.iter().chain(&res.state.ut).all(|x| *x == 0.0));
        assert_eq!(energy(nl.as_ref(), &res.state).unwrap(), 0.0);
        assert_eq!(norm_hh(&res.state), 0.0);
    }

    #[test]
    fn w_diagnostics() {
        let nl = builtin("scalar-focusing").unwrap();
        let s = w_state(40.0, 4001);
        let grad = explicit_w(1.0, &standard_grid()).unwrap().gradient_energy();
        assert!((energy(nl.as_ref(), &s).unwrap() - E_W).abs() < 1e-6);
        assert!((norm_hh(&s) - grad).abs() < 1e-7);
        assert!((exterior_energy(&s, 0.0) - grad).abs() < 1e-7);
        let mut last = f64::INFINITY;
        for k in 0..60 {
            let e = exterior_energy(&s, k as f64 * 0.77);
            assert!(e <= last + 1e-14);
            last = e;
        }
        // beyond the grid the exterior energy is that of the tail 3/R to leading order
        assert!((exterior_energy(&s, 100.0) - 3.0 / 100.0).abs() < 1e-4);
    }

    #[test]
    fn compact_data_has_no_exterior_energy() {
        let s = WaveState::from_fn(10.0, 1001, 1, |r| (vec![bump(r, 3.0, 1.0).0], vec![0.0])).unwrap();
        assert_eq!(exterior_energy(&s, 4.5), 0.0);
        let nl = builtin("scalar-focusing").unwrap();
        assert!((s.dynamic_support(nl.as_ref()) - 4.0).abs() < 0.05);
    }

    #[test]
    fn domain_check() {
        let nl = builtin("scalar-focusing").unwrap();
        let s = WaveState::from_fn(10.0, 1001, 1, |r| (vec![bump(r, 3.0, 1.0).0], vec![0.0])).unwrap();
        let cfg = EvolveConfig::new(nl, s.dr, 6.0, 10);
        assert!(matches!(evolve(&cfg, &s), Err(Error::DomainTooSmall { .. })));
    }

    #[test]
    fn cfl_violation_is_rejected_and_unstable() {
        let nl = builtin("euclidean-1").unwrap();
        let s = WaveState::from_fn(20.0, 401, 1, |r| (vec![0.1 * bump(r, 3.0, 1.0).0], vec![0.0])).unwrap();
        let mut cfg = EvolveConfig::new(nl, s.dr, 10.0, 1000);
        cfg.dt = 1.1 * s.dr;
        assert!(matches!(evolve(&cfg, &s), Err(Error::InvalidArgument(_))));
        let res = evolve_unchecked(&cfg, &s);
        let blew = match res {
            Ok(r) => r.outcome == Outcome::BlowupDetected || r.state.sup_norm() > 1e3,
            Err(Error::NonFiniteState(_)) => true,
            Err(e) => panic!("{e}"),
        };
        assert!(blew);
    }

    #[test]
    fn snapshot_roundtrip() {
        let s = w_state(10.0, 64);
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CWWS");
        assert_eq!(WaveState::read_binary(&buf[..]).unwrap(), s);
        assert!(WaveState::read_binary(&b"CWRPxxxx"[..]).is_err());
    }

    #[test]
    fn finite_speed_of_propagation() {
        let nl = builtin("scalar-focusing").unwrap();
        let (rho, t) = (4.0, 5.0);
        let s = WaveState::from_fn(20.0, 2001, 1, |r| {
            let (b, _) = bump(r, 3.0, 1.0);
            (vec![0.3 * b], vec![0.2 * b])
        })
        .unwrap();
        let cfg = EvolveConfig::new(nl, s.dr, t, 100);
        let res = evolve(&cfg, &s).unwrap();
        // the stencil moves one cell per step, so the numerical cone is r ≤ ρ + t/cfl
        let cone = rho + t / cfg.cfl;
        let outside = (0..s.nr).filter(|&i| s.r(i) > cone + s.dr).map(|i| res.state.value(i)[0].abs()).fold(0.0, f64::max);
        assert_eq!(outside, 0.0);
        let beyond_light = (0..s.nr).filter(|&i| s.r(i) > rho + t + 0.5).map(|i| res.state.value(i)[0].abs()).fold(0.0, f64::max);
        assert!(beyond_light < 1e-12, "{beyond_light}");
    }

    #[test]
    fn time_reversal() {
        let nl = builtin("scalar-focusing").unwrap();
        let s = WaveState::from_fn(20.0, 2001, 1, |r| (vec![0.2 * bump(r, 3.0, 1.0).0], vec![0.0])).unwrap();
        let cfg = EvolveConfig::new(nl, s.dr, 4.0, 1000);
        let fwd = evolve(&cfg, &s).unwrap();
        assert_eq!(fwd.outcome, Outcome::Completed);
        let fwd = fwd.state;
        let mut back = fwd.clone();
        back.ut.iter_mut().for_each(|x| *x = -*x);
        let ret = evolve(&cfg, &back).unwrap().state;
        let err = s.u.iter().zip(&ret.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn linear_energy_is_conserved() {
        let nl = builtin("free-1").unwrap();
        let s = WaveState::from_fn(30.0, 3001, 1, |r| {
            let (b, _) = bump(r, 4.0, 2.0);
            (vec![b], vec![0.0])
        })
        .unwrap();
        let cfg = EvolveConfig::new(nl.clone(), s.dr, 10.0, 100);
        let res = evolve(&cfg, &s).unwrap();
        let n0 = norm_hh(&s);
        for snap in &res.snapshots {
            assert!((norm_hh(snap) - n0).abs() < 1e-3 * n0, "{} {n0}", norm_hh(snap));
        }
    }

    #[test]
    fn relaxed_w_is_a_discrete_steady_state() {
        let nl = builtin("scalar-focusing").unwrap();
        let mut gaps = Vec::new();
        for nr in [2001, 4001] {
            let s = w_state(20.0, nr);
            let relaxed = relax_stationary(nl.as_ref(), &s, 1e-13).unwrap();
            assert_eq!(relaxed.value(nr - 1), s.value(nr - 1));
            assert!(relaxed.ut.iter().all(|x| *x == 0.0));
            gaps.push((0..nr).map(|i| (relaxed.value(i)[0] - s.value(i)[0]).abs()).fold(0.0, f64::max));
            // the relaxed state does not move under the scheme
            let run = evolve_unchecked(&EvolveConfig::new(nl.clone(), s.dr, 2.0, usize::MAX), &relaxed).unwrap();
            let moved = (0..nr).map(|i| (run.state.value(i)[0] - relaxed.value(i)[0]).abs()).fold(0.0, f64::max);
            assert!(moved < 1e-10, "{moved}");
        }
        // the offset from the sampled profile is the O(dr²) truncation error
        assert!((gaps[0] / gaps[1] - 4.0).abs() < 0.2, "{gaps:?}");
        let pair = builtin("euclidean-2").unwrap();
        assert!(matches!(relax_stationary(pair.as_ref(), &w_state(20.0, 101), 1e-13), Err(Error::InvalidArgument(_))));
    }
}
