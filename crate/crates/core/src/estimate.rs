//! Inference of the diffusivity θ and the Hurst index H from a path
//! observed on a dyadic grid.

use serde::{Deserialize, Serialize};

use crate::constants::check_hurst;
use crate::error::{Error, Result};
use crate::model::SigmaSpec;
use crate::sampler::PathSample;
use crate::stats::{dyadic_restriction, quadratic_variation, qvar_target, McSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub estimate: f64,
    pub mc: Option<McSummary>,
    pub true_value: Option<f64>,
    pub rel_error: Option<f64>,
    /// How H entered the θ estimate: "given" or "estimated".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hurst_mode: Option<String>,
}

impl EstimateReport {
    /// Summarize per-path estimates against an optional true value.
    pub fn from_ensemble(estimator: &str, estimates: &[f64], true_value: Option<f64>) -> Self {
        let mc = McSummary::from_samples(estimates);
        let rel_error = true_value
            .filter(|t| *t != 0.0)
            .map(|t| (mc.mean - t).abs() / t.abs());
        EstimateReport {
            estimator: estimator.to_string(),
            estimate: mc.mean,
            mc: Some(mc),
            true_value,
            rel_error,
            hurst_mode: None,
        }
    }
}

/// Invert the quadratic-variation limit: for the ratio
/// `V_N / (κ² (1/N) Σ σ(u(t_i))²) = θ^{H−1}`.
pub fn estimate_theta(path: &PathSample, sigma: SigmaSpec, h: f64) -> Result<f64> {
    check_hurst(h)?;
    let v = quadratic_variation(path, h)?.v_n;
    let denom = qvar_target(path, sigma, h, 1.0)?;
    if denom == 0.0 {
        return Err(Error::Undefined("σ vanishes along the whole path".into()));
    }
    if v == 0.0 {
        return Err(Error::Undefined("path has zero quadratic variation".into()));
    }
    Ok((v / denom).powf(1.0 / (h - 1.0)))
}

/// `Ĥ = 1 − log₂(S_{2N}/S_N)`, where `S_N` is the raw sum of squared
/// increments on `i/N`. The path must resolve `2N`, i.e. live on `i/(2N)`
/// or a refinement of it.
pub fn estimate_h(path: &PathSample, n: usize) -> Result<f64> {
    let s = |m: usize| -> Result<f64> {
        let p = dyadic_restriction(path, m)?;
        Ok(p.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum())
    };
    let coarse = s(n)?;
    let fine = s(2 * n)?;
    if coarse == 0.0 || fine == 0.0 {
        return Err(Error::Undefined("squared-increment sum vanishes".into()));
    }
    Ok(1.0 - (fine / coarse).log2())
}

/// Estimates far outside the model's range (0, 1/2]; a differentiable path
/// has squared increments of order N^{−2} and gives Ĥ ≈ 2.
pub fn out_of_model(h_hat: f64) -> bool {
    !(h_hat > 0.0 && h_hat <= 0.75)
}
