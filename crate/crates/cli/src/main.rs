//! `critwave`: scenario runner for radial energy-critical wave systems.
//!
//! Exit status: 0 when every run completed, 2 when a run detected blow-up,
//! 1 on any error.

mod runner;
mod scenario;
mod tools;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use critwave::evolution::Outcome;
use critwave::{builtin, Registry};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "critwave", version, about = "Radial energy-critical wave laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario TOML, or a run's manifest.json to re-run it.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve one scenario and run its diagnostics.
    Run(Common),
    /// Run several scenarios on a worker pool; `--config` may repeat or name a directory.
    Sweep {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        /// Parent of the per-scenario run directories.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Case label, blow-up radius and energy of Z_θ over a θ grid.
    Atlas {
        #[arg(long)]
        nonlinearity: String,
        /// Points on the unit sphere of θ directions.
        #[arg(long, default_value_t = 16)]
        directions: usize,
        /// Comma-separated |θ| values.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.6, 1.3, 3.0])]
        radii: Vec<f64>,
        /// Explicit charge such as `0,1`; repeatable, replaces the grid.
        #[arg(long = "theta")]
        thetas: Vec<String>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value = "atlas")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Exterior-energy channel table for a scenario's initial data.
    Channels {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
        radii: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Recompute diagnostics from a stored run directory.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/analysis`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the registered nonlinearity families.
    List,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run(c) => {
            let (loaded, manifest_seed) = runner::load_config(&c.config)?;
            let seed = c.seed.or(manifest_seed).unwrap_or_else(|| loaded.seed(None));
            let dir = c
                .out
                .or_else(|| loaded.scenario.output.clone())
                .unwrap_or_else(|| Path::new("runs").join(&loaded.scenario.name));
            let summary = runner::run(&loaded, seed, &dir)?;
            println!("{}: {:?} -> {}", loaded.scenario.name, summary.outcome, summary.dir.display());
            Ok(summary.outcome.exit_code() as u8)
        }
        Command::Sweep { config, out, jobs, seed } => sweep(&config, &out, jobs, seed),
        Command::Atlas { nonlinearity, directions, radii, thetas, tol, out, jobs } => {
            let nl = builtin(&nonlinearity).map_err(|e| anyhow!("--nonlinearity: {e}"))?;
            let grid = if thetas.is_empty() {
                critwave::stationary::theta_grid(nl.dim(), directions, &radii)
            } else {
                thetas.iter().map(|t| parse_theta(t, nl.dim())).collect::<anyhow::Result<Vec<_>>>()?
            };
            let rows = pool(jobs)?.install(|| tools::atlas(nl.as_ref(), &grid, tol));
            fs::create_dir_all(&out)?;
            tools::write_atlas(BufWriter::new(fs::File::create(out.join("atlas.csv"))?), &rows)?;
            let assumptions = tools::assumptions_json(&rows);
            fs::write(out.join("assumptions.json"), serde_json::to_string_pretty(&assumptions)? + "\n")?;
            println!("{} rows, {} case C -> {}", rows.len(), assumptions["case_c_rows"], out.display());
            Ok(0)
        }
        Command::Channels { common, radii, times } => {
            let (loaded, manifest_seed) = runner::load_config(&common.config)?;
            let seed = common.seed.or(manifest_seed).unwrap_or_else(|| loaded.seed(None));
            let rows = tools::channels(&loaded, seed, &radii, &times)?;
            match common.out {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    tools::write_channels(BufWriter::new(fs::File::create(&path)?), &rows)?
                }
                None => tools::write_channels(io::stdout().lock(), &rows)?,
            }
            Ok(0)
        }
        Command::Analyze { run, out } => {
            let out = out.unwrap_or_else(|| run.join("analysis"));
            let summary = runner::analyze_run(&run, &out)?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(0)
        }
        Command::Validate { config } => {
            let (loaded, _) = runner::load_config(&config)?;
            loaded.initial_state(loaded.seed(None)).context("initial data")?;
            println!("{}: ok", config.display());
            Ok(0)
        }
        Command::List => {
            let mut out = io::stdout().lock();
            for p in Registry::with_builtins().patterns() {
                writeln!(out, "{p}")?;
            }
            Ok(0)
        }
    }
}

fn parse_theta(text: &str, m: usize) -> anyhow::Result<Vec<f64>> {
    let theta = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("--theta {text}: {e}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if theta.len() != m {
        return Err(anyhow!("--theta {text}: need {m} components"));
    }
    Ok(theta)
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

fn sweep(configs: &[PathBuf], out: &Path, jobs: usize, seed: Option<u64>) -> anyhow::Result<u8> {
    let mut paths = Vec::new();
    for c in configs {
        if c.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(c)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "toml"))
                .collect();
            found.sort();
            paths.extend(found);
        } else {
            paths.push(c.clone());
        }
    }
    let loaded = paths.iter().map(|p| runner::load_config(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut names: Vec<&str> = loaded.iter().map(|(l, _)| l.scenario.name.as_str()).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(anyhow!("two scenarios share the name `{}`", w[0]));
    }
    let results: Vec<anyhow::Result<Outcome>> = pool(jobs)?.install(|| {
        loaded
            .par_iter()
            .map(|(l, manifest_seed)| {
                let s = seed.or(*manifest_seed).unwrap_or_else(|| l.seed(None));
                runner::run(l, s, &out.join(&l.scenario.name)).map(|r| r.outcome)
            })
            .collect()
    });
    let mut code = 0u8;
    for ((l, _), r) in loaded.iter().zip(&results) {
        match r {
            Ok(o) => {
                println!("{}: {o:?}", l.scenario.name);
                code = code.max(o.exit_code() as u8);
            }
            Err(e) => {
                eprintln!("{}: error: {e:#}", l.scenario.name);
                code = 1;
            }
        }
    }
    // errors dominate blow-ups
    if results.iter().any(|r| r.is_err()) {
        code = 1;
    }
    Ok(code)
}
