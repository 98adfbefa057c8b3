//! Scenario files: TOML with strict keys, semantic validation with line
//! attribution, and resolution of the initial-data spec to a `WaveState`.

use std::fmt;
use std::path::{Path, PathBuf};

use critwave::evolution::{bump, WaveState};
use critwave::nonlinearity::sphere_samples;
use critwave::stationary::{ground_state, w_bubble};
use critwave::{builtin, Nonlinearity, VectorNonlinearity};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Registry name, e.g. `scalar-focusing` or `euclidean-3`.
    pub nonlinearity: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub data: DataSpec,
    pub evolve: EvolveSpec,
    #[serde(default)]
    pub analysis: AnalysisPlan,
    /// Run directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub nr: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub bubbles: Vec<BubbleSpec>,
    #[serde(default)]
    pub bumps: Vec<BumpSpec>,
    /// Binary snapshot on the same grid; bubbles and bumps are added to it.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BubbleCandidate {
    /// `μωW` with `ω` maximizing `F` on the sphere.
    #[default]
    Ground,
    /// `μωW` along the given `omega`, `μ = (6F(ω))^{-1/4}`.
    Direction,
    /// As `direction` with `ω` drawn from the scenario seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSpec {
    #[serde(default)]
    pub candidate: BubbleCandidate,
    pub lambda: f64,
    #[serde(default = "one")]
    pub sign: f64,
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    U,
    Ut,
}

/// `amplitude·(1 − ((r − center)/width)²)⁴` on one component.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub component: usize,
    #[serde(default)]
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub t_final: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default)]
    pub blowup_threshold: Option<f64>,
    /// Project the data onto a discrete steady state first (for stationary data).
    #[serde(default)]
    pub relax: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisPlan {
    /// Use every `cadence`-th snapshot in the time series.
    #[serde(default = "one_usize")]
    pub cadence: usize,
    #[serde(default)]
    pub exterior_radii: Vec<f64>,
    #[serde(default = "yes")]
    pub virial: bool,
    #[serde(default = "yes")]
    pub three_e: bool,
    #[serde(default)]
    pub radiation: Option<RadiationPlan>,
    #[serde(default)]
    pub resolution: bool,
    #[serde(default = "default_sphere_points")]
    pub sphere_points: usize,
}

impl Default for AnalysisPlan {
    fn default() -> Self {
        Self {
            cadence: 1,
            exterior_radii: Vec::new(),
            virial: true,
            three_e: true,
            radiation: None,
            resolution: false,
            sphere_points: default_sphere_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RadiationPlan {
    /// `[η_min, η_max]`; defaults to the region `r ≥ t/2` of the last snapshot.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_snapshot_every() -> usize {
    100
}
fn default_sphere_points() -> usize {
    64
}
fn default_samples() -> usize {
    4
}

/// A configuration problem tied to a field path and, when found, a source line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parsed scenario together with its source text.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub source: String,
    /// Directory relative paths in the scenario are resolved against.
    pub base: PathBuf,
}

pub fn parse(source: &str) -> Result<Scenario, ConfigError> {
    toml::from_str(source).map_err(|e| {
        let line = e.span().map(|s| source[..s.start].matches('\n').count() + 1);
        ConfigError { field: field_from_message(e.message()), line, message: e.message().to_string() }
    })
}

fn field_from_message(msg: &str) -> String {
    // serde messages quote the offending key in backticks
    msg.split('`').nth(1).unwrap_or("<document>").to_string()
}

/// 1-based line of the `occurrence`-th assignment to `key`.
fn line_of(source: &str, key: &str, occurrence: usize) -> Option<usize> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim_start();
            t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .nth(occurrence)
        .map(|(i, _)| i + 1)
}

impl Loaded {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_source(source, base).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn from_source(source: String, base: PathBuf) -> Result<Self, ConfigError> {
        let scenario = parse(&source)?;
        let loaded = Self { scenario, source, base };
        loaded.validate()?;
        Ok(loaded)
    }

    fn err(&self, field: &str, key: &str, occurrence: usize, message: impl Into<String>) -> ConfigError {
        ConfigError { field: field.to_string(), line: line_of(&self.source, key, occurrence), message: message.into() }
    }

    pub fn nonlinearity(&self) -> Result<VectorNonlinearity, ConfigError> {
        builtin(&self.scenario.nonlinearity).map_err(|e| self.err("nonlinearity", "nonlinearity", 0, e.to_string()))
    }

    /// Structural and semantic checks that need no computation beyond the registry.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.name.trim().is_empty() || s.name.contains(['/', '\\']) {
            return Err(self.err("name", "name", 0, "must be a non-empty plain file name"));
        }
        let nl = self.nonlinearity()?;
        let m = nl.dim();
        if !(s.grid.r_max > 0.0) {
            return Err(self.err("grid.r_max", "r_max", 0, "must be positive"));
        }
        if s.grid.nr < 8 {
            return Err(self.err("grid.nr", "nr", 0, "need at least 8 nodes"));
        }
        if !(s.evolve.t_final >= 0.0) || !s.evolve.t_final.is_finite() {
            return Err(self.err("evolve.t_final", "t_final", 0, "must be finite and non-negative"));
        }
        if s.evolve.snapshot_every == 0 {
            return Err(self.err("evolve.snapshot_every", "snapshot_every", 0, "must be at least 1"));
        }
        if let Some(c) = s.evolve.cfl {
            if !(c > 0.0 && c <= 1.0) {
                return Err(self.err("evolve.cfl", "cfl", 0, "must lie in (0, 1]"));
            }
        }
        if let Some(b) = s.evolve.blowup_threshold {
            if !(b > 0.0) {
                return Err(self.err("evolve.blowup_threshold", "blowup_threshold", 0, "must be positive"));
            }
        }
        for (i, b) in s.data.bumps.iter().enumerate() {
            if !(b.width > 0.0) {
                return Err(self.err(&format!("data.bumps[{i}].width"), "width", i, "must be positive"));
            }
            if b.component >= m {
                return Err(self.err(
                    &format!("data.bumps[{i}].component"),
                    "component",
                    0,
                    format!("{} has {m} components", nl.name()),
                ));
            }
        }
        let mut omega_count = 0;
        for (i, b) in s.data.bubbles.iter().enumerate() {
            if !(b.lambda > 0.0) {
                return Err(self.err(&format!("data.bubbles[{i}].lambda"), "lambda", i, "must be positive"));
            }
            match (b.candidate, &b.omega) {
                (BubbleCandidate::Direction, None) => {
                    return Err(self.err(
                        &format!("data.bubbles[{i}].omega"),
                        "candidate",
                        i,
                        "candidate `direction` needs `omega`",
                    ))
                }
                (_, Some(o)) => {
                    if o.len() != m || o.iter().all(|x| *x == 0.0) {
                        return Err(self.err(
                            &format!("data.bubbles[{i}].omega"),
                            "omega",
                            omega_count,
                            format!("need a nonzero vector with {m} components"),
                        ));
                    }
                    omega_count += 1;
                }
                _ => {}
            }
        }
        if let Some(f) = &s.data.file {
            if !self.base.join(f).exists() {
                return Err(self.err("data.file", "file", 0, format!("{} does not exist", f.display())));
            }
        }
        let a = &s.analysis;
        if a.cadence == 0 {
            return Err(self.err("analysis.cadence", "cadence", 0, "must be at least 1"));
        }
        if let Some(r) = &a.radiation {
            if r.samples < 2 {
                return Err(self.err("analysis.radiation.samples", "samples", 0, "need at least 2"));
            }
            if let Some([lo, hi]) = r.window {
                if !(lo < hi) {
                    return Err(self.err("analysis.radiation.window", "window", 0, "need lo < hi"));
                }
            }
        }
        Ok(())
    }

    /// The seed in effect: `--seed`, then the scenario, then 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.scenario.seed).unwrap_or(0)
    }

    /// Initial data on the configured grid.
    pub fn initial_state(&self, seed: u64) -> anyhow::Result<WaveState> {
        let s = &self.scenario;
        let nl = self.nonlinearity()?;
        let m = nl.dim();
        let mut bubbles = Vec::new();
        for (i, b) in s.data.bubbles.iter().enumerate() {
            let field = format!("data.bubbles[{i}]");
            let (omega, mu) = match b.candidate {
                BubbleCandidate::Ground => {
                    let gs = ground_state(nl.as_ref(), 1e-14, 10)
                        .map_err(|e| self.err(&field, "candidate", i, format!("no ground state: {e}")))?;
                    (gs.omega, gs.mu)
                }
                BubbleCandidate::Direction | BubbleCandidate::Random => {
                    let omega = match (&b.omega, b.candidate) {
                        (Some(o), _) => unit(o),
                        // one draw per bubble index keeps earlier bubbles stable when more are added
                        (None, _) => sphere_samples(m.max(4), i + 1, seed ^ 0x9e37_79b9_7f4a_7c15)[i][..m].to_vec(),
                    };
                    let omega = unit(&omega);
                    (omega.clone(), direction_mu(nl.as_ref(), &omega).map_err(|msg| self.err(&field, "lambda", i, msg))?)
                }
            };
            bubbles.push((omega, mu * b.sign, b.lambda));
        }
        let mut state = WaveState::from_fn(s.grid.r_max, s.grid.nr, m, |r| {
            let mut u = vec![0.0; m];
            let mut ut = vec![0.0; m];
            for (omega, amp, lambda) in &bubbles {
                let w = w_bubble(r, *lambda).0;
                for k in 0..m {
                    u[k] += amp * omega[k] * w;
                }
            }
            for b in &s.data.bumps {
                let v = b.amplitude * bump(r, b.center, b.width).0;
                match b.field {
                    Field::U => u[b.component] += v,
                    Field::Ut => ut[b.component] += v,
                }
            }
            (u, ut)
        })?;
        if let Some(f) = &s.data.file {
            let path = self.base.join(f);
            let bytes = std::fs::read(&path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            let loaded = WaveState::read_binary(&bytes[..])?;
            if loaded.nr != state.nr || loaded.m != m || (loaded.dr - state.dr).abs() > 1e-12 * state.dr {
                return Err(self
                    .err("data.file", "file", 0, "snapshot grid differs from [grid] or the nonlinearity dimension")
                    .into());
            }
            for (x, y) in state.u.iter_mut().zip(&loaded.u) {
                *x += y;
            }
            for (x, y) in state.ut.iter_mut().zip(&loaded.ut) {
                *x += y;
            }
        }
        Ok(state)
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn direction_mu(nl: &dyn Nonlinearity, omega: &[f64]) -> Result<f64, String> {
    match nl.potential(omega) {
        Some(f) if f > 0.0 => Ok((6.0 * f).powf(-0.25)),
        Some(f) => Err(format!("F(omega) = {f} is not positive, no bubble along this direction")),
        None => Err(format!("{} has no potential; only `ground` is defined", nl.name())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
nonlinearity = "scalar-focusing"

[grid]
r_max = 20.0
nr = 201

[evolve]
t_final = 1.0
"#;

    fn load(src: &str) -> Result<Loaded, ConfigError> {
        Loaded::from_source(src.to_string(), PathBuf::from("."))
    }

    #[test]
    fn minimal_scenario_has_defaults() {
        let l = load(BASE).unwrap();
        assert_eq!(l.scenario.evolve.snapshot_every, 100);
        assert!(l.scenario.analysis.virial);
        assert_eq!(l.seed(None), 0);
        assert_eq!(l.seed(Some(7)), 7);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let src = BASE.replace("nr = 201", "nr = 201\nnx = 3");
        let e = load(&src).unwrap_err();
        assert_eq!(e.field, "nx");
        assert_eq!(e.line, Some(8));
    }

    #[test]
    fn missing_nonlinearity_names_the_field() {
        let e = load(&BASE.replace("nonlinearity = \"scalar-focusing\"\n", "")).unwrap_err();
        assert_eq!(e.field, "nonlinearity");
        let e = load(&BASE.replace("scalar-focusing", "nope")).unwrap_err();
        assert_eq!((e.field.as_str(), e.line), ("nonlinearity", Some(3)));
    }

    #[test]
    fn semantic_errors_point_at_the_line() {
        let src = format!("{BASE}\n[[data.bumps]]\ncenter = 1.0\nwidth = 0.0\namplitude = 1.0\n");
        let e = load(&src).unwrap_err();
        assert_eq!(e.field, "data.bumps[0].width");
        assert_eq!(e.line, Some(src.lines().position(|l| l.starts_with("width")).unwrap() + 1));
        let e = load(&BASE.replace("t_final = 1.0", "t_final = -1.0")).unwrap_err();
        assert_eq!(e.field, "evolve.t_final");
    }

    #[test]
    fn data_resolution() {
        let src = format!(
            "{BASE}\n[[data.bubbles]]\nlambda = 2.0\nsign = -1.0\n\n[[data.bumps]]\ncenter = 5.0\nwidth = 1.0\namplitude = 0.5\nfield = \"ut\"\n"
        );
        let l = load(&src).unwrap();
        let s = l.initial_state(0).unwrap();
        assert!((s.value(0)[0] + w_bubble(0.0, 2.0).0).abs() < 1e-15);
        assert!((s.velocity(50)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_direction_follows_the_seed() {
        let src = BASE.replace("scalar-focusing", "euclidean-3")
            + "\n[[data.bubbles]]\ncandidate = \"random\"\nlambda = 1.0\n";
        let l = load(&src).unwrap();
        let a = l.initial_state(1).unwrap();
        let b = l.initial_state(1).unwrap();
        let c = l.initial_state(2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let n: f64 = a.value(0).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
