//! Closed-form constants, covariance kernels and the special functions they
//! rest on. Everything here is pure.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};

/// Smallest admissible spatial Hurst index (exclusive).
pub const HURST_MIN: f64 = 0.25;
/// Largest admissible spatial Hurst index (inclusive; `1/2` is the white-noise limit).
pub const HURST_MAX: f64 = 0.5;

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if h > HURST_MIN && h <= HURST_MAX {
        Ok(())
    } else {
        Err(domain(format!("Hurst index {h} outside (1/4, 1/2]")))
    }
}

fn check_time(name: &str, t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!(
            "{name} = {t} must be a finite nonnegative time"
        )))
    }
}

/// κ = (Γ(2H)/Γ(H))^{1/2}: the fBm(H/2) scale of the linear solution's
/// temporal increments.
pub fn kappa(h: f64) -> Result<f64> {
    Ok(kappa_sq(h)?.sqrt())
}

pub fn kappa_sq(h: f64) -> Result<f64> {
    check_hurst(h)?;
    Ok(gamma(2.0 * h) / gamma(h))
}

/// κ̃ = (Γ(2H)/(2^{1−H}Γ(H)))^{1/2}, so that E|v(t,x)|² = κ̃² t^H.
pub fn kappa_tilde(h: f64) -> Result<f64> {
    Ok(kappa_tilde_sq(h)?.sqrt())
}

pub fn kappa_tilde_sq(h: f64) -> Result<f64> {
    Ok(kappa_sq(h)? * 2f64.powf(h - 1.0))
}

/// Density constant c₁,₁ = Γ(2H+1) sin(πH) / (2π) of the spatial spectral
/// measure c₁,₁|ξ|^{1−2H} dξ.
pub fn spectral_constant(h: f64) -> Result<f64> {
    check_hurst(h)?;
    Ok(gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI))
}

/// Autocovariance of unit-step fractional Gaussian noise,
/// ½(|k+1|^H + |k−1|^H − 2|k|^H). Here `h` is the exponent as written,
/// i.e. twice the Hurst index of the underlying fBm.
pub fn rho(k: i64, h: f64) -> f64 {
    let k = k.unsigned_abs() as f64;
    0.5 * ((k + 1.0).powf(h) + (k - 1.0).abs().powf(h) - 2.0 * k.powf(h))
}

/// Heat kernel p_t(x) = (4πt)^{−1/2} exp(−x²/(4t)) of ∂²/∂x².
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok((-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt())
}

/// Temporal covariance of the linear solution at a fixed site,
/// θ^{H−1}(κ²/2)[(s+t)^H − |t−s|^H].
pub fn cov_linear_she(s: f64, t: f64, h: f64, theta: f64) -> Result<f64> {
    check_time("s", s)?;
    check_time("t", t)?;
    if !(theta > 0.0) {
        return Err(domain(format!("diffusivity must be positive, got {theta}")));
    }
    let k2 = kappa_sq(h)?;
    Ok(theta.powf(h - 1.0) * linear_she_unit(s, t, h, k2))
}

#[inline]
pub(crate) fn linear_she_unit(s: f64, t: f64, h: f64, k2: f64) -> f64 {
    0.5 * k2 * ((s + t).powf(h) - (t - s).abs().powf(h))
}

/// Covariance of the smooth correction process, (κ²/2)[s^H + t^H − (s+t)^H].
pub fn cov_t(s: f64, t: f64, h: f64) -> Result<f64> {
    check_time("s", s)?;
    check_time("t", t)?;
    let k2 = kappa_sq(h)?;
    Ok(t_process_unit(s, t, h, k2))
}

#[inline]
pub(crate) fn t_process_unit(s: f64, t: f64, h: f64, k2: f64) -> f64 {
    0.5 * k2 * (s.powf(h) + t.powf(h) - (s + t).powf(h))
}

/// Fractional Brownian motion covariance ½(s^{2h} + t^{2h} − |t−s|^{2h}).
pub fn cov_fbm(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_time("s", s)?;
    check_time("t", t)?;
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(domain(format!("fBm Hurst index {hurst} outside (0, 1)")));
    }
    Ok(fbm_unit(s, t, hurst))
}

#[inline]
pub(crate) fn fbm_unit(s: f64, t: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// E|𝒩|^p = 2^{p/2} Γ((p+1)/2) / √π for a standard Gaussian 𝒩.
pub fn gaussian_abs_moment(p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(domain(format!("moment order must be positive, got {p}")));
    }
    Ok(2f64.powf(0.5 * p) * gamma(0.5 * (p + 1.0)) / PI.sqrt())
}

/// Constant of the weighted 2/H-variation limit, κ^{2/H} E|𝒩|^{2/H}.
pub fn power_variation_constant(h: f64) -> Result<f64> {
    let p = 2.0 / h;
    Ok(kappa(h)?.powf(p) * gaussian_abs_moment(p)?)
}

/// Constant in the increment bound of the smooth correction process,
/// 2^H Γ(1+2H) Γ(2−H) sin(Hπ) / (16π).
pub fn t_increment_constant(h: f64) -> Result<f64> {
    check_hurst(h)?;
    Ok(2f64.powf(h) * gamma(1.0 + 2.0 * h) * gamma(2.0 - h) * (h * PI).sin() / (16.0 * PI))
}
