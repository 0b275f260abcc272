//! Experiment runner: resolves a configuration, runs one experiment inside a
//! fixed-size worker pool and writes its artifacts, a `summary.json` and a
//! `manifest.json` that echoes the resolved configuration.

pub mod config;
mod experiments;
pub mod output;

use std::path::PathBuf;

use roughshe::SeedStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, Format, Overrides, Source, Tolerances};
use output::Artifacts;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] roughshe::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    Pool(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Core(roughshe::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

/// One stream per path: `(root_seed, i)`. Path `i` draws the same numbers
/// whichever worker runs it.
pub fn seed_plan(root_seed: u64, n_paths: usize) -> Vec<SeedStream> {
    (0..n_paths as u64)
        .map(|i| SeedStream::new(root_seed, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub path: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub stat: String,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// A declared tolerance: passes when `lower <= value <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn new(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            value,
            lower,
            upper,
            pass: value >= lower && value <= upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub experiment: Experiment,
    pub n_paths: usize,
    /// `n_paths` minus aborted trajectories.
    pub count: usize,
    pub aborted: Vec<Abort>,
    pub stats: Vec<StatSummary>,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: Experiment,
    workers: usize,
    config: &'a ExperimentConfig,
    artifacts: &'a [String],
}

#[derive(Debug)]
pub struct RunReport {
    pub summary: EnsembleSummary,
    pub dir: PathBuf,
}

/// Resolve, validate and run. Nothing is written when the configuration is
/// rejected.
pub fn run(cfg: ExperimentConfig) -> Result<RunReport, RunError> {
    let cfg = cfg.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.mc.workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let dir = cfg.out_dir();
    let mut art = Artifacts::create(&dir, cfg.output.format)?;
    log::info!(
        "{}: {} paths, {} workers, writing to {}",
        cfg.experiment,
        cfg.n_paths(),
        cfg.mc.workers,
        dir.display()
    );
    let outcome = pool.install(|| experiments::dispatch(&cfg, &mut art))?;

    let n_paths = outcome.n_paths;
    let pass = outcome.checks.iter().all(|c| c.pass);
    let too_many_aborts =
        outcome.aborted.len() as f64 > cfg.tolerances.abort_fraction * n_paths as f64;
    let exit_code = if too_many_aborts {
        3
    } else if pass {
        0
    } else {
        1
    };
    let summary = EnsembleSummary {
        experiment: cfg.experiment,
        n_paths,
        count: n_paths - outcome.aborted.len(),
        aborted: outcome.aborted,
        stats: outcome.stats,
        checks: outcome.checks,
        pass,
        exit_code,
    };
    art.json("summary.json", &summary)?;
    let listed = art.written().to_vec();
    let manifest = Manifest {
        tool: "roughshe",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment,
        workers: cfg.mc.workers,
        config: &cfg,
        artifacts: &listed,
    };
    art.json("manifest.json", &manifest)?;
    Ok(RunReport { summary, dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_plans() {
        assert_eq!(seed_plan(9, 1), vec![SeedStream::new(9, 0)]);
        assert_eq!(seed_plan(3, 5), seed_plan(3, 5));
        let a = seed_plan(1, 4);
        let b = seed_plan(2, 4);
        assert!(a.iter().all(|s| !b.contains(s)));
        let mut ids: Vec<_> = a.iter().map(|s| s.stream_index).collect();
        ids.dedup();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn check_bounds() {
        assert!(CheckOutcome::new("x", 1.0, 0.0, 1.0).pass);
        assert!(!CheckOutcome::new("x", 1.1, 0.0, 1.0).pass);
        assert!(!CheckOutcome::new("x", f64::NAN, 0.0, 1.0).pass);
    }

    #[test]
    fn error_codes() {
        assert_eq!(RunError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            RunError::Core(roughshe::Error::Undefined("x".into())).exit_code(),
            1
        );
    }
}
