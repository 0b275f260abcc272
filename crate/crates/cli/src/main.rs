use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roughshe_cli::config::Overrides;
use roughshe_cli::{run, Experiment, ExperimentConfig, RunError};

const EXPERIMENTS: [&str; 9] = [
    "verify-constants",
    "sample",
    "solve",
    "qvar",
    "lil",
    "pvar",
    "estimate",
    "tailbounds",
    "scaling",
];

/// Monte Carlo experiments for the stochastic heat equation with rough noise.
#[derive(Parser, Debug)]
#[command(name = "roughshe", version)]
struct Cli {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
    experiment: String,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "H")]
    hurst: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// linear:a, sin:a, tanh:a or additive
    #[arg(long)]
    sigma: Option<String>,
    /// Initial condition, e.g. zero or cosine
    #[arg(long)]
    u0: Option<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $ROUGHSHE_OUT/<experiment> or roughshe-out/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long, value_parser = ["exact", "solver"])]
    source: Option<String>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn build(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let c = ExperimentConfig::load(path)?;
            if c.experiment != experiment {
                return Err(RunError::Config(format!(
                    "config is for '{}' but '{experiment}' was requested",
                    c.experiment
                )));
            }
            c
        }
        None => ExperimentConfig::new(experiment),
    };
    cfg.apply(&Overrides {
        hurst: cli.hurst,
        theta: cli.theta,
        sigma: cli.sigma.clone(),
        u0: cli.u0.clone(),
        n: cli.n,
        paths: cli.paths,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
        format: cli.format.clone(),
        source: cli.source.clone(),
    })?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let code = match build(&cli).and_then(run) {
        Ok(report) => {
            let s = &report.summary;
            for c in &s.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {} = {:e} in [{:e}, {:e}]",
                    c.name, c.value, c.lower, c.upper
                );
            }
            if !s.aborted.is_empty() {
                println!("{} of {} trajectories aborted", s.aborted.len(), s.n_paths);
            }
            println!("artifacts in {}", report.dir.display());
            s.exit_code
        }
        Err(e) => {
            eprintln!("roughshe: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
