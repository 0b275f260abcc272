//! Experiment configuration: TOML file, command-line overrides, and the
//! per-experiment defaults that fill whatever is left unset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use roughshe::stats::Weight;
use roughshe::{InitialCondition, ModelParams, SigmaSpec};
use serde::{Deserialize, Serialize};

use crate::RunError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ROUGHSHE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyConstants,
    Sample,
    Solve,
    Qvar,
    Lil,
    Pvar,
    Estimate,
    Tailbounds,
    Scaling,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::VerifyConstants,
        Experiment::Sample,
        Experiment::Solve,
        Experiment::Qvar,
        Experiment::Lil,
        Experiment::Pvar,
        Experiment::Estimate,
        Experiment::Tailbounds,
        Experiment::Scaling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::VerifyConstants => "verify-constants",
            Experiment::Sample => "sample",
            Experiment::Solve => "solve",
            Experiment::Qvar => "qvar",
            Experiment::Lil => "lil",
            Experiment::Pvar => "pvar",
            Experiment::Estimate => "estimate",
            Experiment::Tailbounds => "tailbounds",
            Experiment::Scaling => "scaling",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| RunError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Where paths come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Exact Cholesky samples of the linear equation.
    Exact,
    /// The pseudo-spectral solver.
    Solver,
}

impl FromStr for Source {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "exact" => Ok(Source::Exact),
            "solver" => Ok(Source::Solver),
            _ => Err(RunError::Config(format!(
                "unknown source '{s}' (exact|solver)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(RunError::Config(format!("unknown format '{s}' (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub theta: f64,
    pub sigma: Option<SigmaSpec>,
    pub u0: Option<InitialCondition>,
    #[serde(default)]
    pub white_noise: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hurst: 0.3,
            theta: 1.0,
            sigma: None,
            u0: None,
            white_noise: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericSection {
    pub source: Option<Source>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub n_modes: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub n_probes: Option<usize>,
    pub record_stride: Option<usize>,
    pub dealias: Option<bool>,
    /// Dyadic LIL levels 2^-eps_max_exp ..= 2^-eps_min_exp.
    pub eps_min_exp: Option<i32>,
    pub eps_max_exp: Option<i32>,
    /// Lags (in grid steps) for the scaling fit.
    pub lags: Option<Vec<usize>>,
    pub weight: Option<Weight>,
    pub rel_tol: Option<f64>,
    pub max_evals: Option<usize>,
    pub t_list: Option<Vec<f64>>,
    pub a_list: Option<Vec<f64>>,
    pub b_list: Option<Vec<f64>>,
    pub beta_list: Option<Vec<f64>>,
    pub green_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_paths: Option<usize>,
    pub root_seed: u64,
    /// Not echoed into artifacts: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_paths: None,
            root_seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Not echoed either, so reruns into another directory compare equal.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
    pub format: Format,
    /// Write one CSV per path (sample and solve).
    pub per_path: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            format: Format::Csv,
            per_path: true,
        }
    }
}

/// Declared tolerances; defaults are the acceptance thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity_rel: f64,
    pub mc_sigmas: f64,
    pub decay_slope: [f64; 2],
    pub ratio_band: [f64; 2],
    pub variance_rel: f64,
    pub exact_slope_abs: f64,
    pub solver_slope_abs: f64,
    pub lil_band: [f64; 2],
    pub lil_fraction: f64,
    pub chung_batch_rel: f64,
    pub pvar_rel: f64,
    pub theta_rel: f64,
    pub hurst_abs: f64,
    pub quadrature_rel: f64,
    pub kernel_scaling: f64,
    pub abort_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity_rel: 1e-12,
            mc_sigmas: 3.0,
            decay_slope: [-1.4, -0.6],
            ratio_band: [0.85, 1.15],
            variance_rel: 0.1,
            exact_slope_abs: 0.02,
            solver_slope_abs: 0.1,
            lil_band: [0.2, 3.0],
            lil_fraction: 0.9,
            chung_batch_rel: 0.3,
            pvar_rel: 0.1,
            theta_rel: 0.1,
            hurst_abs: 0.03,
            quadrature_rel: 1e-6,
            kernel_scaling: 1e-3,
            abort_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub numeric: NumericSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub hurst: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<String>,
    pub u0: Option<String>,
    pub n: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub source: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            model: ModelSection::default(),
            numeric: NumericSection::default(),
            mc: McSection::default(),
            output: OutputSection::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// A TOML config file, or a `manifest.json` written by an earlier run.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        if let Ok(serde_json::Value::Object(mut m)) =
            serde_json::from_str::<serde_json::Value>(&text)
        {
            let inner = m
                .remove("config")
                .ok_or_else(|| RunError::Config("JSON config must be a manifest".into()))?;
            return serde_json::from_value(inner).map_err(|e| RunError::Config(e.to_string()));
        }
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), RunError> {
        let cfg = |e: roughshe::Error| RunError::Config(e.to_string());
        if let Some(h) = o.hurst {
            self.model.hurst = h;
        }
        if let Some(t) = o.theta {
            self.model.theta = t;
        }
        if let Some(s) = &o.sigma {
            self.model.sigma = Some(s.parse().map_err(cfg)?);
        }
        if let Some(s) = &o.u0 {
            self.model.u0 = Some(s.parse().map_err(cfg)?);
        }
        if let Some(n) = o.n {
            self.numeric.n = Some(n);
        }
        if let Some(n) = o.paths {
            self.mc.n_paths = Some(n);
        }
        if let Some(s) = o.seed {
            self.mc.root_seed = s;
        }
        if let Some(w) = o.workers {
            self.mc.workers = w;
        }
        if let Some(d) = &o.out {
            self.output.dir = Some(d.clone());
        }
        if let Some(f) = &o.format {
            self.output.format = f.parse()?;
        }
        if let Some(s) = &o.source {
            self.numeric.source = Some(s.parse()?);
        }
        Ok(())
    }

    /// Fill every unset field with the experiment's default and validate.
    pub fn resolve(mut self) -> Result<Self, RunError> {
        use Experiment::*;
        let e = self.experiment;
        let num = &mut self.numeric;
        let source = *num.source.get_or_insert(match e {
            Solve => Source::Solver,
            _ => Source::Exact,
        });
        let solver = source == Source::Solver;
        let (sigma, u0) = if solver {
            (
                SigmaSpec::Linear(1.0),
                InitialCondition::Cosine {
                    mean: 1.0,
                    amplitude: 0.5,
                    mode: 1,
                },
            )
        } else {
            (SigmaSpec::Additive, InitialCondition::Zero)
        };
        self.model.sigma.get_or_insert(sigma);
        self.model.u0.get_or_insert(u0);

        let default_n = match e {
            Qvar | Pvar if solver => 512,
            Qvar | Sample => 1024,
            Pvar | Estimate => 4096,
            Scaling => 2048,
            _ => 1024,
        };
        num.n.get_or_insert(default_n);
        let default_paths = match e {
            VerifyConstants | Tailbounds => 1,
            Solve | Estimate => 100,
            Qvar if solver => 100,
            Scaling if solver => 100,
            _ => 200,
        };
        self.mc.n_paths.get_or_insert(default_paths);
        if e == Qvar && !solver {
            num.n_list.get_or_insert(vec![256, 512, 1024]);
        }
        if e == Estimate {
            num.n_list.get_or_insert(vec![1024, 2048, 4096]);
        }
        if solver {
            let dt = *num.dt.get_or_insert(1.0 / 2048.0);
            num.length.get_or_insert(16.0);
            num.n_modes.get_or_insert(8192);
            num.t_end.get_or_insert(1.0 + 64.0 * dt);
            num.n_probes.get_or_insert(8);
            num.record_stride.get_or_insert(1);
            num.dealias.get_or_insert(false);
        }
        if e == Lil {
            num.eps_min_exp.get_or_insert(8);
            num.eps_max_exp.get_or_insert(20);
        }
        if e == Scaling {
            num.lags.get_or_insert(vec![4, 8, 16, 32, 64]);
        }
        if e == Pvar {
            num.weight.get_or_insert(Weight::Const);
        }
        if e == Tailbounds {
            num.rel_tol.get_or_insert(1e-6);
            num.max_evals.get_or_insert(20_000_000);
            num.t_list.get_or_insert(vec![0.5, 1.0]);
            num.a_list.get_or_insert(vec![0.25, 0.5]);
            num.b_list.get_or_insert(vec![2.0, 4.0, 8.0, 16.0, 32.0]);
            num.beta_list.get_or_insert(vec![0.1, 0.2, 0.25]);
            num.green_exponent
                .get_or_insert(0.1f64.min(0.5 * (0.5 - self.model.hurst)));
        }
        if e == VerifyConstants {
            num.rel_tol.get_or_insert(1e-8);
            num.max_evals.get_or_insert(20_000_000);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        let n_paths = self.mc.n_paths.unwrap_or(1);
        if n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.mc.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.model_params()?;
        if let Some(n) = self.numeric.n {
            if n < 2 {
                return bad(format!("N must be at least 2, got {n}"));
            }
        }
        use Experiment::*;
        match (self.experiment, self.numeric.source) {
            (Solve, Some(Source::Exact)) => {
                return bad("solve needs numeric.source = \"solver\"".into())
            }
            (Sample | Lil | Estimate | VerifyConstants | Tailbounds, Some(Source::Solver)) => {
                return bad(format!("{} runs on exact paths only", self.experiment));
            }
            _ => {}
        }
        if self.experiment == Solve || self.numeric.source == Some(Source::Solver) {
            self.solver_config()?;
        }
        if let (Some(lo), Some(hi)) = (self.numeric.eps_min_exp, self.numeric.eps_max_exp) {
            if lo < 1 || hi < lo || hi > 26 {
                return bad(format!(
                    "LIL exponents need 1 <= min <= max <= 26, got {lo}, {hi}"
                ));
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams, RunError> {
        let m = &self.model;
        let p = ModelParams {
            hurst: m.hurst,
            theta: m.theta,
            sigma: m.sigma.unwrap_or(SigmaSpec::Additive),
            u0: m.u0.unwrap_or(InitialCondition::Zero),
            white_noise: m.white_noise,
        };
        p.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn solver_config(&self) -> Result<roughshe::solver::SolverConfig, RunError> {
        let n = &self.numeric;
        let missing = |f: &str| RunError::Config(format!("solver runs need numeric.{f}"));
        let length = n.length.ok_or_else(|| missing("L"))?;
        let n_probes = n.n_probes.ok_or_else(|| missing("n_probes"))?;
        let mut c = roughshe::solver::SolverConfig {
            params: self.model_params()?,
            length,
            n_modes: n.n_modes.ok_or_else(|| missing("n_modes"))?,
            dt: n.dt.ok_or_else(|| missing("dt"))?,
            t_end: n.t_end.ok_or_else(|| missing("t_end"))?,
            probes: (0..n_probes)
                .map(|j| j as f64 * length / n_probes as f64)
                .collect(),
            record_stride: n.record_stride.unwrap_or(1),
            seed: roughshe::SeedStream::new(self.mc.root_seed, 0),
            dealias: n.dealias.unwrap_or(false),
            store_field: false,
            field_stride: 1,
        };
        if n_probes == 0 {
            c.probes.clear();
        }
        c.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn n_paths(&self) -> usize {
        self.mc.n_paths.unwrap_or(1)
    }

    pub fn out_dir(&self) -> PathBuf {
        match &self.output.dir {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("roughshe-out"))
                .join(self.experiment.name()),
        }
    }
}
