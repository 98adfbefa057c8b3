//! Scenario execution, post-hoc diagnostics and the run-directory layout:
//!
//! ```text
//! <run>/config.toml      verbatim scenario
//! <run>/manifest.json    config hash, versions, seed, outcome
//! <run>/snapshots/*.bin  states every `snapshot_every` steps
//! <run>/series.csv       t, E, norm_HH, exterior energies, sup|u|
//! <run>/virial.csv, three_e.json, radiation.csv, resolution.{csv,json}
//! <run>/summary.json
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use critwave::evolution::{energy, evolve, relax_stationary, write_time_series, EvolveConfig, Outcome, WaveState};
use critwave::radiation::extract_radiation;
use critwave::resolution::{analyze, candidate_library, check_3e_bound, virial_series, AnalysisOptions};
use critwave::{fmt17, Nonlinearity};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::scenario::{AnalysisPlan, Loaded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// SHA-256 of `config`.
    pub config_hash: String,
    pub config: String,
    pub seed: u64,
    pub versions: Versions,
    pub outcome: String,
    pub exit_code: i32,
    pub t_reached: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub critwave_core: String,
    pub critwave_cli: String,
}

pub fn config_hash(source: &str) -> String {
    Sha256::digest(source.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a scenario from a TOML file or from the `config` of a run manifest.
/// Returns the scenario and the seed recorded in the manifest, if any.
pub fn load_config(path: &Path) -> anyhow::Result<(Loaded, Option<u64>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))?;
        if config_hash(&manifest.config) != manifest.config_hash {
            return Err(anyhow!("{}: config does not match its recorded hash", path.display()));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Loaded::from_source(manifest.config, base).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        return Ok((loaded, Some(manifest.seed)));
    }
    Ok((Loaded::from_path(path)?, None))
}

pub struct RunSummary {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Executes the scenario and writes its run directory.
pub fn run(loaded: &Loaded, seed: u64, dir: &Path) -> anyhow::Result<RunSummary> {
    let s = &loaded.scenario;
    let nl = loaded.nonlinearity()?;
    let mut state = loaded.initial_state(seed)?;
    if s.evolve.relax {
        state = relax_stationary(nl.as_ref(), &state, 1e-13).context("evolve.relax")?;
    }
    let mut cfg = EvolveConfig::new(nl.clone(), state.dr, s.evolve.t_final, s.evolve.snapshot_every);
    if let Some(c) = s.evolve.cfl {
        cfg.cfl = c;
        cfg.dt = c * state.dr;
    }
    if let Some(b) = s.evolve.blowup_threshold {
        cfg.blowup_threshold = b;
    }
    let result = evolve(&cfg, &state)?;

    prepare_dir(dir)?;
    fs::write(dir.join("config.toml"), &loaded.source)?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    for (i, snap) in result.snapshots.iter().enumerate() {
        let f = fs::File::create(snap_dir.join(format!("{i:05}.bin")))?;
        snap.write_binary(BufWriter::new(f))?;
    }
    let mut summary = diagnostics(nl.as_ref(), &s.analysis, &result.snapshots, dir)?;
    let outcome = result.outcome;
    if let Value::Object(map) = &mut summary {
        map.insert("outcome".into(), json!(format!("{outcome:?}")));
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;

    let manifest = Manifest {
        name: s.name.clone(),
        config_hash: config_hash(&loaded.source),
        config: loaded.source.clone(),
        seed,
        versions: Versions { critwave_core: critwave::VERSION.into(), critwave_cli: env!("CARGO_PKG_VERSION").into() },
        outcome: format!("{outcome:?}"),
        exit_code: outcome.exit_code(),
        t_reached: result.state.t,
        snapshots: result.snapshots.len(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunSummary { dir: dir.to_path_buf(), outcome })
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.join("manifest.json").exists() || dir.join("snapshots").exists() {
        // a rerun replaces its own previous artefacts only
        for f in ["summary.json", "manifest.json", "series.csv", "virial.csv", "three_e.json", "radiation.csv", "resolution.csv", "resolution.json"] {
            let _ = fs::remove_file(dir.join(f));
        }
        let _ = fs::remove_dir_all(dir.join("snapshots"));
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Configured diagnostics on `snapshots`, written into `dir`. Failures of
/// individual diagnostics are recorded in the returned summary.
pub fn diagnostics(
    nl: &dyn Nonlinearity,
    plan: &AnalysisPlan,
    snapshots: &[WaveState],
    dir: &Path,
) -> anyhow::Result<Value> {
    fs::create_dir_all(dir)?;
    let series: Vec<WaveState> = snapshots
        .iter()
        .enumerate()
        .filter(|(i, _)| i % plan.cadence == 0 || *i + 1 == snapshots.len())
        .map(|(_, s)| s.clone())
        .collect();
    let mut summary = serde_json::Map::new();
    let mut notes = serde_json::Map::new();
    let first = snapshots.first().ok_or_else(|| anyhow!("no snapshots"))?;
    let last = snapshots.last().unwrap();
    summary.insert("t_final".into(), json!(fmt17(last.t)));
    summary.insert("snapshots".into(), json!(snapshots.len()));

    write_time_series(BufWriter::new(fs::File::create(dir.join("series.csv"))?), nl, &series, &plan.exterior_radii)?;
    if nl.has_potential() {
        let e0 = energy(nl, first)?;
        let drift = series.iter().map(|s| energy(nl, s).map(|e| (e - e0).abs())).try_fold(0.0f64, |a, e| e.map(|e| a.max(e)))?;
        summary.insert("energy".into(), json!(fmt17(e0)));
        summary.insert("max_energy_drift".into(), json!(fmt17(drift)));
    }

    if plan.virial {
        match virial_series(&series, nl) {
            Ok(v) => {
                v.write_csv(BufWriter::new(fs::File::create(dir.join("virial.csv"))?))?;
            }
            Err(e) => {
                notes.insert("virial".into(), json!(e.to_string()));
            }
        }
    }
    if plan.three_e {
        match check_3e_bound(&series, nl) {
            Ok(b) => {
                let v = json!({
                    "energy": fmt17(b.energy),
                    "max_ratio": fmt17(b.max_ratio),
                    "tail_max_ratio": fmt17(b.tail_max_ratio),
                });
                fs::write(dir.join("three_e.json"), serde_json::to_string_pretty(&v)? + "\n")?;
                summary.insert("three_e".into(), v);
            }
            Err(e) => {
                notes.insert("three_e".into(), json!(e.to_string()));
            }
        }
    }
    if let Some(r) = &plan.radiation {
        let late: Vec<WaveState> = snapshots.iter().rev().take(r.samples).rev().cloned().collect();
        let window = r.window.map(|[a, b]| (a, b)).unwrap_or((last.t - last.r_max(), 0.5 * last.t));
        match extract_radiation(&late, window) {
            Ok(field) => {
                field.write_csv(BufWriter::new(fs::File::create(dir.join("radiation.csv"))?))?;
                summary.insert("radiation_mass".into(), json!(fmt17(field.l2_mass)));
            }
            Err(e) => {
                notes.insert("radiation".into(), json!(e.to_string()));
            }
        }
    }
    if plan.resolution {
        let opts = AnalysisOptions {
            window: plan.radiation.as_ref().and_then(|r| r.window.map(|[a, b]| (a, b))),
            radiation_samples: plan.radiation.as_ref().map_or(4, |r| r.samples),
            ..AnalysisOptions::default()
        };
        let report = candidate_library(nl, plan.sphere_points).and_then(|c| analyze(snapshots, nl, &c, &opts));
        match report {
            Ok(report) => {
                report.write_csv(BufWriter::new(fs::File::create(dir.join("resolution.csv"))?))?;
                fs::write(dir.join("resolution.json"), report.summary() + "\n")?;
                summary.insert("bubbles".into(), json!(report.j));
                summary.insert("budget_gap".into(), json!(fmt17(report.budget_gap)));
            }
            Err(e) => {
                notes.insert("resolution".into(), json!(e.to_string()));
            }
        }
    }
    if !notes.is_empty() {
        summary.insert("skipped".into(), Value::Object(notes));
    }
    Ok(Value::Object(summary))
}

/// Re-reads a run directory and recomputes its diagnostics into `out`.
pub fn analyze_run(run_dir: &Path, out: &Path) -> anyhow::Result<Value> {
    let (loaded, _) = load_config(&run_dir.join("manifest.json"))?;
    let nl = loaded.nonlinearity()?;
    let mut files: Vec<PathBuf> = fs::read_dir(run_dir.join("snapshots"))
        .with_context(|| format!("{} has no snapshots", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    let snapshots = files
        .iter()
        .map(|p| -> anyhow::Result<WaveState> { Ok(WaveState::read_binary(&fs::read(p)?[..])?) })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let summary = diagnostics(nl.as_ref(), &loaded.scenario.analysis, &snapshots, out)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
