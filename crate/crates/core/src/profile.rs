//! Radial ℝᵐ-valued profiles sampled with values and first derivatives.
//!
//! Between nodes a profile is the cubic Hermite interpolant of its
//! `(value, derivative)` data.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::quad;
use crate::tail::ExteriorTail;
use crate::{dot, fmt17};

const MAGIC: &[u8; 4] = b"CWRP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    m: usize,
}

impl RadialProfile {
    /// Row-major `values`/`derivs` (`n × m`). A grid starting at 0 marks the
    /// profile regular at the origin, which requires zero slope there.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>, m: usize) -> Result<Self> {
        let n = grid.len();
        if m == 0 || n < 2 {
            return Err(Error::InvalidArgument("profile needs m >= 1 and two nodes".into()));
        }
        if values.len() != n * m || derivs.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "profile data length mismatch: grid {n}, m {m}, values {}, derivs {}",
                values.len(),
                derivs.len()
            )));
        }
        if grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("profile grid must be positive and increasing".into()));
        }
        if grid[0] == 0.0 && derivs[..m].iter().any(|d| *d != 0.0) {
            return Err(Error::InvalidArgument("regular profile needs zero slope at r = 0".into()));
        }
        if values.iter().chain(&derivs).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("profile data must be finite".into()));
        }
        Ok(Self { grid, values, derivs, m })
    }

    /// Samples `f(r) -> (u, u')` on `grid`.
    pub fn from_fn<F>(grid: &[f64], m: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> (Vec<f64>, Vec<f64>),
    {
        let mut values = Vec::with_capacity(grid.len() * m);
        let mut derivs = Vec::with_capacity(grid.len() * m);
        for &r in grid {
            let (u, du) = f(r);
            values.extend(u);
            derivs.extend(du);
        }
        if grid.first() == Some(&0.0) {
            derivs[..m].iter_mut().for_each(|d| *d = 0.0);
        }
        Self::new(grid.to_vec(), values, derivs, m)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn regular_at_origin(&self) -> bool {
        self.grid[0] == 0.0
    }

    pub fn r_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn r_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.m..(i + 1) * self.m]
    }

    fn locate(&self, r: f64) -> Result<usize> {
        let (lo, hi) = (self.r_min(), self.r_max());
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfDomain { r, lo, hi });
        }
        let k = self.grid.partition_point(|&x| x <= r);
        Ok(k.saturating_sub(1).min(self.grid.len() - 2))
    }

    /// Hermite value and slope on interval `i` at local coordinate `t ∈ [0, 1]`.
    fn interval_eval(&self, i: usize, t: f64, val: &mut [f64], der: &mut [f64]) {
        let h = self.grid[i + 1] - self.grid[i];
        let t2 = t * t;
        let t3 = t2 * t;
        let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2);
        let (g00, g10, g01, g11) = (
            (6.0 * t2 - 6.0 * t) / h,
            3.0 * t2 - 4.0 * t + 1.0,
            (-6.0 * t2 + 6.0 * t) / h,
            3.0 * t2 - 2.0 * t,
        );
        let (y0, y1) = (self.value(i), self.value(i + 1));
        let (d0, d1) = (self.deriv(i), self.deriv(i + 1));
        for k in 0..self.m {
            val[k] = h00 * y0[k] + h * h10 * d0[k] + h01 * y1[k] + h * h11 * d1[k];
            der[k] = g00 * y0[k] + g10 * d0[k] + g01 * y1[k] + g11 * d1[k];
        }
    }

    /// Interpolated `(u(r), u′(r))`.
    pub fn eval(&self, r: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let i = self.locate(r)?;
        let mut v = vec![0.0; self.m];
        let mut d = vec![0.0; self.m];
        let t = (r - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        self.interval_eval(i, t, &mut v, &mut d);
        Ok((v, d))
    }

    /// Second derivatives at every node: slope of the quartic through the
    /// first derivatives at the five nearest nodes (fourth order). Using only
    /// slope data keeps rounding at `ε|u′|/h` instead of `ε|u|/h²`.
    pub fn second_derivs(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * self.m];
        let width = n.min(5);
        if width < 2 {
            return out;
        }
        for i in 0..n {
            let start = i.saturating_sub(width / 2).min(n - width);
            let weights = first_derivative_weights(&self.grid[start..start + width], self.grid[i]);
            for k in 0..self.m {
                out[i * self.m + k] =
                    weights.iter().enumerate().map(|(j, w)| w * self.deriv(start + j)[k]).sum();
            }
        }
        out
    }

    /// Critical rescaling `λ^{-1/2} p(r/λ)`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        let a = lambda.powf(-0.5);
        let b = lambda.powf(-1.5);
        Self {
            grid: self.grid.iter().map(|r| r * lambda).collect(),
            values: self.values.iter().map(|v| a * v).collect(),
            derivs: self.derivs.iter().map(|d| b * d).collect(),
            m: self.m,
        }
    }

    pub fn scaled_by(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            derivs: self.derivs.iter().map(|d| c * d).collect(),
            m: self.m,
        }
    }

    /// Exterior `θ/r + c/r³` model matched at the last node.
    pub fn tail(&self) -> ExteriorTail {
        let n = self.len() - 1;
        ExteriorTail::from_value_slope(self.grid[n], self.value(n), self.deriv(n))
    }

    /// `θ ≈ lim r·u(r)` read from the exterior model.
    pub fn asymptotic_charge(&self) -> Vec<f64> {
        self.tail().theta
    }

    /// `Σ_intervals ∫ g(r, u, u′) dr` with six Gauss points per interval, from r_min to `upto`.
    fn integrate<G: FnMut(f64, &[f64], &[f64]) -> f64>(&self, upto: f64, mut g: G) -> f64 {
        let (x, w) = quad::gl6();
        let mut val = vec![0.0; self.m];
        let mut der = vec![0.0; self.m];
        let mut total = 0.0;
        for i in 0..self.len() - 1 {
            let (a, b_full) = (self.grid[i], self.grid[i + 1]);
            if a >= upto {
                break;
            }
            let b = b_full.min(upto);
            let h = b_full - a;
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut s = 0.0;
            for (xi, wi) in x.iter().zip(w) {
                let r = mid + half * xi;
                self.interval_eval(i, (r - a) / h, &mut val, &mut der);
                s += wi * g(r, &val, &der);
            }
            total += s * half;
        }
        total
    }

    /// `∫_{r_min}^{ρ} |u′|² r² dr` (no tail).
    pub fn cumulative_gradient_energy(&self, rho: f64) -> f64 {
        self.integrate(rho, |r, _, d| dot(d, d) * r * r)
    }

    /// `∫ |u′|² r² dr` over the whole half-line (exterior tail included).
    pub fn gradient_energy(&self) -> f64 {
        self.cumulative_gradient_energy(f64::INFINITY) + self.tail().gradient_energy()
    }

    /// `∫ F(u) r² dr` with exterior tail, `None` without a potential.
    pub fn potential_integral(&self, nl: &dyn Nonlinearity) -> Option<f64> {
        if !nl.has_potential() {
            return None;
        }
        let inner = self.integrate(f64::INFINITY, |r, u, _| nl.potential(u).unwrap_or(0.0) * r * r);
        Some(inner + self.tail().potential_integral(nl)?)
    }

    /// `∫ |u|⁶ r² dr` with exterior tail.
    pub fn l6_mass(&self) -> f64 {
        self.integrate(f64::INFINITY, |r, u, _| dot(u, u).powi(3) * r * r) + self.tail().l6_mass()
    }

    /// `(1/2)∫|u′|² − ∫F(u)`.
    pub fn energy(&self, nl: &dyn Nonlinearity) -> Option<f64> {
        Some(0.5 * self.gradient_energy() - self.potential_integral(nl)?)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["r".to_string()];
        header.extend((1..=self.m).map(|k| format!("u{k}")));
        header.extend((1..=self.m).map(|k| format!("du{k}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![fmt17(self.grid[i])];
            row.extend(self.value(i).iter().map(|&x| fmt17(x)));
            row.extend(self.deriv(i).iter().map(|&x| fmt17(x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty profile csv".into()))??;
        let cols = header.split(',').count();
        if cols < 3 || (cols - 1) % 2 != 0 {
            return Err(Error::Format(format!("profile csv header has {cols} columns")));
        }
        let m = (cols - 1) / 2;
        let (mut grid, mut values, mut derivs) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", ln + 2)))?;
            if nums.len() != cols {
                return Err(Error::Format(format!("line {}: expected {cols} fields", ln + 2)));
            }
            grid.push(nums[0]);
            values.extend_from_slice(&nums[1..=m]);
            derivs.extend_from_slice(&nums[m + 1..]);
        }
        Self::new(grid, values, derivs, m)
    }

    /// Binary snapshot: `CWRP`, version u32, m u32, n u64, then grid | values | derivs (LE f64).
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in self.grid.iter().chain(&self.values).chain(&self.derivs) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad profile magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported profile version {version}")));
        }
        let m = read_u32(&mut input)? as usize;
        let n = read_u64(&mut input)? as usize;
        let grid = read_f64s(&mut input, n)?;
        let values = read_f64s(&mut input, n * m)?;
        let derivs = read_f64s(&mut input, n * m)?;
        Self::new(grid, values, derivs, m)
    }
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

/// Weights `w` with `p′(x) = Σ w_j p(z_j)` for the interpolating polynomial
/// through the nodes `z` (Fornberg's recursion, first derivative only).
fn first_derivative_weights(z: &[f64], x: f64) -> Vec<f64> {
    let n = z.len();
    // c[j][k]: weight of node j for derivative order k (k = 0, 1)
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = z[0] - x;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = z[i] - x;
        for j in 0..i {
            let c3 = z[i] - z[j];
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// `[0, r_lo·q, …, r_hi]`: origin plus a geometric grid with `per_decade` points per decade.
pub fn geometric_grid(r_lo: f64, r_hi: f64, per_decade: usize, with_origin: bool) -> Vec<f64> {
    let decades = (r_hi / r_lo).log10();
    let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let mut g = Vec::with_capacity(n + 2);
    if with_origin {
        g.push(0.0);
    }
    for k in 0..=n {
        g.push(r_lo * (r_hi / r_lo).powf(k as f64 / n as f64));
    }
    g
}
