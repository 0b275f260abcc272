//! Temporal statistics of a path at a fixed site.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{check_hurst, cov_linear_she, kappa_sq, power_variation_constant};
use crate::error::{domain, Error, Result};
use crate::model::SigmaSpec;
use crate::sampler::{PathSample, TimeGrid};

/// `values[i + eps_steps] − values[i]` for every admissible `i`.
pub fn increment(path: &PathSample, eps_steps: usize) -> Result<Vec<f64>> {
    let v = &path.values;
    if eps_steps == 0 || eps_steps >= v.len() {
        return Err(domain(format!(
            "increment lag {eps_steps} outside [1, {})",
            v.len()
        )));
    }
    Ok(v.iter().zip(&v[eps_steps..]).map(|(a, b)| b - a).collect())
}

/// Mean, standard error and size of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl McSummary {
    /// Summation runs in slice order, so equal inputs give equal bits.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / n as f64
        };
        let stderr = if n < 2 {
            f64::NAN
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        };
        McSummary {
            mean,
            stderr,
            count: n,
        }
    }
}

/// The sub-path on `t_i = i/N`, `i = 0..=N`. The path must start at 0, reach
/// 1, and have a spacing that divides `1/N`.
pub fn dyadic_restriction(path: &PathSample, n: usize) -> Result<PathSample> {
    let g = path.grid;
    let stride = (1.0 / (n as f64 * g.dt)).round();
    if n == 0 || g.t0 != 0.0 || stride < 1.0 || (stride * g.dt * n as f64 - 1.0).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "grid with dt {} cannot be restricted to t_i = i/{n}",
            g.dt
        )));
    }
    let stride = stride as usize;
    if n * stride >= g.n {
        return Err(Error::GridMismatch(format!(
            "path ends at {} before t = 1",
            g.t_end()
        )));
    }
    let values = (0..=n).map(|i| path.values[i * stride]).collect();
    PathSample::new(TimeGrid::dyadic(n)?, values, path.meta.clone())
}

fn require_dyadic(path: &PathSample) -> Result<usize> {
    let n = path.grid.n - 1;
    if path.grid.same_as(&TimeGrid::dyadic(n)?) {
        Ok(n)
    } else {
        Err(Error::GridMismatch(format!(
            "expected the grid i/N on [0, 1], got t0={} dt={} with {} points",
            path.grid.t0, path.grid.dt, path.grid.n
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVarReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "V_N")]
    pub v_n: f64,
    pub target: f64,
    pub rel_error: f64,
    pub mc_summary: Option<McSummary>,
}

/// `V_N = N^{H−1} Σ (u(t_{i+1}) − u(t_i))²` on `t_i = i/N`; the target is κ².
pub fn quadratic_variation(path: &PathSample, h: f64) -> Result<QVarReport> {
    let n = require_dyadic(path)?;
    let target = kappa_sq(h)?;
    let v_n = raw_square_sum(&path.values) * (n as f64).powf(h - 1.0);
    Ok(QVarReport {
        n,
        v_n,
        target,
        rel_error: (v_n - target).abs() / target,
        mc_summary: None,
    })
}

fn raw_square_sum(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// Ensemble version: `v_n` is the ensemble mean.
pub fn ensemble_quadratic_variation(paths: &[PathSample], h: f64) -> Result<QVarReport> {
    if paths.is_empty() {
        return Err(domain("empty ensemble"));
    }
    let vs = paths
        .iter()
        .map(|p| quadratic_variation(p, h).map(|r| r.v_n))
        .collect::<Result<Vec<_>>>()?;
    let s = McSummary::from_samples(&vs);
    let target = kappa_sq(h)?;
    Ok(QVarReport {
        n: paths[0].grid.n - 1,
        v_n: s.mean,
        target,
        rel_error: (s.mean - target).abs() / target,
        mc_summary: Some(s),
    })
}

/// `θ^{H−1} κ² (1/N) Σ_{i<N} σ(u(t_i))²`.
pub fn qvar_target(path: &PathSample, sigma: SigmaSpec, h: f64, theta: f64) -> Result<f64> {
    let n = require_dyadic(path)?;
    if !(theta > 0.0) {
        return Err(domain(format!("theta must be positive, got {theta}")));
    }
    let mean_sq = path.values[..n]
        .iter()
        .map(|&u| sigma.eval(u).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(theta.powf(h - 1.0) * kappa_sq(h)? * mean_sq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub n_list: Vec<usize>,
    /// Ensemble mean of |V_N − κ²|² at each N.
    pub mse: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
}

/// Regression slope of log E|V_N − κ²|² on log N, using the dyadic
/// restrictions of each path to every N in `n_list`.
pub fn qvar_variance_decay(paths: &[PathSample], h: f64, n_list: &[usize]) -> Result<DecayReport> {
    if n_list.len() < 3 {
        return Err(domain(format!(
            "variance decay needs at least 3 levels, got {}",
            n_list.len()
        )));
    }
    if paths.len() < 2 {
        return Err(domain(
            "variance decay needs an ensemble of at least 2 paths",
        ));
    }
    let k2 = kappa_sq(h)?;
    let mut mse = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut acc = 0.0;
        for p in paths {
            let r = quadratic_variation(&dyadic_restriction(p, n)?, h)?;
            acc += (r.v_n - k2).powi(2);
        }
        mse.push(acc / paths.len() as f64);
    }
    let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = mse.iter().map(|m| m.ln()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(DecayReport {
        n_list: n_list.to_vec(),
        mse,
        slope: fit.slope,
        slope_stderr: fit.stderr,
    })
}

/// Lipschitz weights for the power variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    Const,
    Identity,
    Tanh,
    Zero,
}

impl Weight {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Weight::Const => 1.0,
            Weight::Identity => u,
            Weight::Tanh => u.tanh(),
            Weight::Zero => 0.0,
        }
    }
}

impl FromStr for Weight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" | "1" => Ok(Weight::Const),
            "identity" => Ok(Weight::Identity),
            "tanh" => Ok(Weight::Tanh),
            "zero" | "0" => Ok(Weight::Zero),
            _ => Err(Error::Config(format!("unknown weight '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerVariation {
    pub value: f64,
    pub target: f64,
}

/// `Σ_j φ(u(t_j)) |u(t_{j+1}) − u(t_j)|^{2/H}` on a dyadic grid with the
/// plug-in limit `κ^{2/H}E|𝒩|^{2/H} · 2^{−n} Σ_j φ(u(t_j))|σ(u(t_j))|^{2/H}`.
pub fn weighted_power_variation(
    path: &PathSample,
    phi: Weight,
    sigma: SigmaSpec,
    h: f64,
) -> Result<PowerVariation> {
    let n = require_dyadic(path)?;
    if !n.is_power_of_two() {
        return Err(Error::GridMismatch(format!(
            "power variation needs 2^n intervals, got {n}"
        )));
    }
    let p = 2.0 / h;
    let v = &path.values;
    let mut value = 0.0;
    let mut plug = 0.0;
    for j in 0..n {
        let w = phi.eval(v[j]);
        value += w * (v[j + 1] - v[j]).abs().powf(p);
        plug += w * sigma.eval(v[j]).abs().powf(p);
    }
    Ok(PowerVariation {
        value,
        target: power_variation_constant(h)? * plug / n as f64,
    })
}

fn lil_scale(r: f64) -> f64 {
    (1.0 / r).ln().ln().max(1.0)
}

fn eps_steps(grid: &TimeGrid, eps: f64) -> Result<usize> {
    let k = (eps / grid.dt).round();
    if k < 1.0 || (k * grid.dt - eps).abs() > 1e-9 * eps {
        return Err(domain(format!(
            "level {eps} is not a multiple of the grid step {}",
            grid.dt
        )));
    }
    Ok(k as usize)
}

/// For each level ε: sup over grid lags r ≤ ε of
/// `|u(t+r) − u(t)| / (r^{H/2} √(2 max(log log(1/r), 1)))`, `t = time(t_index)`.
pub fn khinchin_statistic(
    path: &PathSample,
    h: f64,
    t_index: usize,
    eps_levels: &[f64],
) -> Result<Vec<f64>> {
    check_hurst(h)?;
    let g = path.grid;
    let steps = eps_levels
        .iter()
        .map(|&e| eps_steps(&g, e))
        .collect::<Result<Vec<_>>>()?;
    let max = steps.iter().copied().max().unwrap_or(0);
    if t_index + max >= g.n {
        return Err(domain(format!(
            "level {max} steps past index {t_index} leaves the path"
        )));
    }
    // running[k] = sup over lags 1..=k
    let base = path.values[t_index];
    let mut running = vec![0.0f64; max + 1];
    for k in 1..=max {
        let r = k as f64 * g.dt;
        let ratio = (path.values[t_index + k] - base).abs()
            / (r.powf(0.5 * h) * (2.0 * lil_scale(r)).sqrt());
        running[k] = running[k - 1].max(ratio);
    }
    Ok(steps.iter().map(|&k| running[k]).collect())
}

/// min over levels ε of `sup_{r≤ε} |u(r) − u(0)| / (ε / max(log log(1/ε), 1))^{H/2}`,
/// with r measured from the first grid point.
pub fn chung_statistic(path: &PathSample, h: f64, eps_levels: &[f64]) -> Result<f64> {
    check_hurst(h)?;
    if eps_levels.is_empty() {
        return Err(domain("no levels given"));
    }
    let g = path.grid;
    let mut best = f64::INFINITY;
    for &eps in eps_levels {
        let k = eps_steps(&g, eps)?;
        if k >= g.n {
            return Err(domain(format!("level {eps} exceeds the path length")));
        }
        let base = path.values[0];
        let sup = path.values[1..=k]
            .iter()
            .fold(0.0f64, |m, v| m.max((v - base).abs()));
        let norm = (eps / lil_scale(eps)).powf(0.5 * h);
        best = best.min(sup / norm);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LILReport {
    pub eps_grid: Vec<f64>,
    pub khinchin_stat: Vec<f64>,
    pub chung_stat: f64,
    pub reference: f64,
}

/// Dyadic levels `2^{-hi}, ..., 2^{-lo}`, ascending.
pub fn dyadic_levels(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).rev().map(|k| 2f64.powi(-k)).collect()
}

pub fn lil_report(
    path: &PathSample,
    h: f64,
    eps_levels: &[f64],
    reference: f64,
) -> Result<LILReport> {
    Ok(LILReport {
        eps_grid: eps_levels.to_vec(),
        khinchin_stat: khinchin_statistic(path, h, 0, eps_levels)?,
        chung_stat: chung_statistic(path, h, eps_levels)?,
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(domain("line fit needs at least two matching points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(domain("line fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(ε, E|u(t+ε) − u(t)|²)`
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub stderr: f64,
}

/// Slope of log E|u(t+ε) − u(t)|² against log ε across an ensemble, with
/// `t = time(t_index)` and lags given in grid steps.
pub fn scaling_exponent(
    paths: &[PathSample],
    t_index: usize,
    eps_steps_list: &[usize],
) -> Result<ScalingFit> {
    if eps_steps_list.len() < 4 {
        return Err(domain(format!(
            "scaling fit needs at least 4 levels, got {}",
            eps_steps_list.len()
        )));
    }
    if paths.is_empty() {
        return Err(domain("empty ensemble"));
    }
    let g = paths[0].grid;
    let mut points = Vec::with_capacity(eps_steps_list.len());
    for &k in eps_steps_list {
        if k == 0 || t_index + k >= g.n {
            return Err(domain(format!(
                "lag {k} from index {t_index} leaves the path"
            )));
        }
        let mut acc = 0.0;
        for p in paths {
            if !p.grid.same_as(&g) {
                return Err(Error::GridMismatch(
                    "ensemble paths must share one grid".into(),
                ));
            }
            acc += (p.values[t_index + k] - p.values[t_index]).powi(2);
        }
        points.push((k as f64 * g.dt, acc / paths.len() as f64));
    }
    slope_of(points)
}

fn slope_of(points: Vec<(f64, f64)>) -> Result<ScalingFit> {
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(ScalingFit {
        points,
        slope: fit.slope,
        stderr: fit.stderr,
    })
}

/// The same regression with second moments from the exact covariance.
pub fn exact_scaling_exponent(h: f64, theta: f64, t: f64, eps_list: &[f64]) -> Result<ScalingFit> {
    if eps_list.len() < 4 {
        return Err(domain(format!(
            "scaling fit needs at least 4 levels, got {}",
            eps_list.len()
        )));
    }
    let mut points = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let s = t + e;
        let m2 = cov_linear_she(s, s, h, theta)? + cov_linear_she(t, t, h, theta)?
            - 2.0 * cov_linear_she(t, s, h, theta)?;
        points.push((e, m2));
    }
    slope_of(points)
}

/// One row of the summary table `stat,N_or_eps,value,target,rel_error,stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub stat: String,
    #[serde(rename = "N_or_eps")]
    pub n_or_eps: f64,
    pub value: f64,
    pub target: f64,
    pub rel_error: f64,
    pub stderr: f64,
}

impl SummaryRow {
    pub fn new(stat: &str, n_or_eps: f64, value: f64, target: f64, stderr: f64) -> Self {
        let rel_error = if target != 0.0 {
            (value - target).abs() / target.abs()
        } else {
            f64::NAN
        };
        SummaryRow {
            stat: stat.to_string(),
            n_or_eps,
            value,
            target,
            rel_error,
            stderr,
        }
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("stat,N_or_eps,value,target,rel_error,stderr\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.stat, r.n_or_eps, r.value, r.target, r.rel_error, r.stderr
        );
    }
    s
}
