//! Deterministic spectral-domain second moments of the linear solution and
//! the integral identities its regularity theory relies on.
//!
//! The harmonizable representation writes `v(t, x)` as an integral over
//! `(τ, ξ)` against independent complex white noise. Restricting the
//! frequency domain to the band `max(|τ|^{H/2}, |ξ|^H) ∈ [a, b)` gives a
//! Gaussian piece whose variance is
//!
//! ```text
//! (c₁,₁ / 2π) ∬ [φ₁² + φ₂²] / (ξ⁴ + τ²) · |ξ|^{1−2H} dτ dξ,
//! φ₁ = cos(τt) − e^{−tξ²},  φ₂ = −sin(τt).
//! ```
//!
//! The `1/2π` comes from Plancherel in the time variable. The `τ` integral
//! is split into a Lorentzian part done in closed form, an oscillatory part
//! integrated numerically up to a cutoff, and an asymptotic tail.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::constants::{check_hurst, spectral_constant};
use crate::error::{domain, Result};
use crate::quad::{integrate, integrate_pieces, integrate_with_floor, QuadResult, QuadratureSpec};

/// Frequency band `[a, b)` in the `max(|τ|^{H/2}, |ξ|^H)` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub a: f64,
    /// `f64::INFINITY` for an unbounded band.
    pub b: f64,
}

impl SpectralBand {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !(b >= a) {
            return Err(domain(format!("band [{a}, {b}) needs 0 <= a <= b")));
        }
        Ok(SpectralBand { a, b })
    }

    pub fn full() -> Self {
        SpectralBand {
            a: 0.0,
            b: f64::INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.a == self.b
    }
}

/// `∫_Y^∞ cos(ωτ) / (λ² + τ²) dτ` by its integration-by-parts expansion;
/// accurate once `ωY` is large.
fn cos_tail(lambda: f64, omega: f64, y: f64) -> f64 {
    if y.is_infinite() {
        return 0.0;
    }
    let l2 = lambda * lambda;
    let d = l2 + y * y;
    let f0 = 1.0 / d;
    let f1 = -2.0 * y / (d * d);
    let f2 = (6.0 * y * y - 2.0 * l2) / (d * d * d);
    let f3 = 24.0 * y * (l2 - y * y) / (d * d * d * d);
    let (s, c) = (omega * y).sin_cos();
    let w = omega;
    let re_a = f1 / (w * w) - f3 / (w * w * w * w);
    let im_b = -f0 / w + f2 / (w * w * w);
    -c * re_a + s * im_b
}

struct TauIntegrator {
    t: f64,
    inner: QuadratureSpec,
}

impl TauIntegrator {
    /// Cutoff beyond which the oscillatory `τ` integral switches to its
    /// asymptotic expansion. The expansion error decays like
    /// `(t·max(τ, λ))^{−5}`, so for `tλ ≥ 400` it is used from the start.
    fn cutoff(&self, lambda: f64) -> f64 {
        if self.t * lambda >= 400.0 {
            0.0
        } else {
            400.0 / self.t
        }
    }

    /// `2 ∫_lo^hi (φ₁² + φ₂²) / (ξ⁴ + τ²) dτ` for `ξ² = lambda`.
    fn band(&self, lambda: f64, lo: f64, hi: f64) -> Result<QuadResult> {
        if hi <= lo {
            return Ok(QuadResult::zero());
        }
        let t = self.t;
        let e = (-t * lambda).exp();
        let em1 = (-t * lambda).exp_m1();
        // Δatan / λ, written to stay accurate for both small and large λ.
        let datan = |lo: f64, hi: f64| -> f64 {
            let atan_ratio = |y: f64| -> f64 {
                if y.is_infinite() {
                    0.0
                } else if y == 0.0 {
                    f64::NAN
                } else {
                    (lambda / y).atan()
                }
            };
            if lo == 0.0 {
                (hi / lambda).atan() / lambda
            } else {
                (atan_ratio(lo) - atan_ratio(hi)) / lambda
            }
        };
        let lorentz = 2.0 * em1 * em1 * datan(lo, hi);
        let x = self.cutoff(lambda);
        let mut osc = QuadResult::zero();
        if lo < x {
            let top = hi.min(x);
            let f = |tau: f64| {
                let s = (0.5 * tau * t).sin();
                2.0 * s * s / (lambda * lambda + tau * tau)
            };
            osc = osc.combine(integrate(f, lo, top, &self.inner)?);
        }
        if hi > x {
            let m = lo.max(x);
            let value = datan(m, hi) - (cos_tail(lambda, t, m) - cos_tail(lambda, t, hi));
            osc = osc.combine(QuadResult {
                value,
                error: 0.0,
                evals: 0,
                converged: true,
            });
        }
        Ok(QuadResult::zero()
            .combine(osc.scale(4.0 * e))
            .combine(QuadResult {
                value: lorentz,
                error: 0.0,
                evals: 0,
                converged: true,
            }))
    }
}

/// Second moment of the band-limited piece `v_x([a, b), t)`.
///
/// Returns the best estimate even when the evaluation budget ran out; check
/// [`QuadResult::converged`].
pub fn band_second_moment(
    band: SpectralBand,
    t: f64,
    h: f64,
    q: &QuadratureSpec,
) -> Result<QuadResult> {
    check_hurst(h)?;
    if !(t > 0.0) {
        return Err(domain(format!("band moment needs t > 0, got {t}")));
    }
    if band.is_empty() {
        return Ok(QuadResult::zero());
    }
    let c11 = spectral_constant(h)?;
    let prefactor = c11 / PI; // (c₁,₁/2π) · 2 for the two signs of ξ
    let xi_a = band.a.powf(1.0 / h);
    let xi_b = band.b.powf(1.0 / h);
    let tau_a = band.a.powf(2.0 / h);
    let tau_b = band.b.powf(2.0 / h);
    let tau = TauIntegrator {
        t,
        inner: q.tightened(0.05),
    };
    let mut failure = None;
    let mut integrand = |xi: f64| -> f64 {
        let lambda = xi * xi;
        let lo = if xi < xi_a { tau_a } else { 0.0 };
        match tau.band(lambda, lo, tau_b) {
            Ok(r) => {
                if !r.converged {
                    failure.get_or_insert(r);
                }
                xi.powf(1.0 - 2.0 * h) * r.value
            }
            Err(_) => f64::NAN,
        }
    };
    // Beyond `r_far` the band covers all τ and e^{−tξ²} is negligible, so
    // the ξ tail is π ∫ ξ^{−1−2H} dξ in closed form.
    let r_far = xi_a.max((40.0 / t).sqrt());
    let upper = if band.b.is_finite() { xi_b } else { r_far };
    let knee = (1.0 / t).sqrt();
    let mut points = vec![0.0];
    for p in [knee.min(xi_a), xi_a, knee, upper] {
        if p > *points.last().unwrap() && p < upper {
            points.push(p);
        }
    }
    points.push(upper);
    let mut r = integrate_pieces(&mut integrand, &points, q)?;
    if band.b.is_infinite() {
        let tail = PI * r_far.powf(-2.0 * h) / (2.0 * h);
        r = r.combine(QuadResult {
            value: tail,
            error: 0.0,
            evals: 0,
            converged: true,
        });
    }
    if let Some(bad) = failure {
        r.converged = false;
        r.error = r.error.max(bad.error);
    }
    if !r.value.is_finite() {
        return Err(domain("band moment integrand produced a non-finite value"));
    }
    Ok(r.scale(prefactor))
}

/// Covariance of the smooth correction process from its spectral form,
/// `(Γ(1+2H) sin(πH) / 4π) ∫ (1 − e^{−sξ²})(1 − e^{−tξ²}) |ξ|^{−1−2H} dξ`.
pub fn cov_t_spectral(s: f64, t: f64, h: f64, q: &QuadratureSpec) -> Result<QuadResult> {
    check_hurst(h)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(domain(format!("times must be nonnegative, got ({s}, {t})")));
    }
    if s == 0.0 || t == 0.0 {
        return Ok(QuadResult::zero());
    }
    let c = statrs::function::gamma::gamma(1.0 + 2.0 * h) * (PI * h).sin() / (4.0 * PI);
    let f = |xi: f64| {
        let x2 = xi * xi;
        (-s * x2).exp_m1() * (-t * x2).exp_m1() * xi.powf(-1.0 - 2.0 * h)
    };
    let lo = s.min(t);
    let far = (40.0 / lo).sqrt();
    let knee = (1.0 / s.max(t)).sqrt();
    let mut pts = vec![0.0, knee, (1.0 / lo).sqrt(), far];
    pts.dedup();
    let body = integrate_pieces(f, &pts, q)?;
    let tail = far.powf(-2.0 * h) / (2.0 * h);
    Ok(body
        .combine(QuadResult {
            value: tail,
            error: 0.0,
            evals: 0,
            converged: true,
        })
        .scale(2.0 * c))
}

/// One row of a check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub params: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
    pub achieved_tol: f64,
}

/// Compare the remainder `‖v − v([a, b))‖` with its explicit bound
/// `rhs² = 8c₁,₁t²a^{2(2−H)/H}/(1−H) + 10(2−H)c₁,₁b^{−2}/(H(1−H))`.
pub fn tail_bound_check(a: f64, b: f64, t: f64, h: f64, q: &QuadratureSpec) -> Result<CheckRecord> {
    let band = SpectralBand::new(a, b)?;
    if band.is_empty() {
        return Err(domain("tail bound needs a < b"));
    }
    let low = band_second_moment(SpectralBand::new(0.0, a)?, t, h, q)?.require()?;
    let high = band_second_moment(SpectralBand::new(b, f64::INFINITY)?, t, h, q)?.require()?;
    let c11 = spectral_constant(h)?;
    let lhs2 = low.value + high.value;
    let rhs2 = 8.0 * c11 / (1.0 - h) * t * t * a.powf(2.0 * (2.0 - h) / h)
        + 10.0 * (2.0 - h) * c11 / (h * (1.0 - h)) * b.powi(-2);
    let lhs = lhs2.max(0.0).sqrt();
    let rhs = rhs2.sqrt();
    let achieved_tol = (low.error + high.error) / lhs2.max(f64::MIN_POSITIVE);
    Ok(CheckRecord {
        check: "tail_bound".into(),
        params: json!({ "a": a, "b": b, "t": t, "H": h }),
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + 2.0 * q.rel_tol),
        achieved_tol: if lhs2 == 0.0 { 0.0 } else { achieved_tol },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelScalingReport {
    pub beta: f64,
    /// `(t, I(t))` pairs.
    pub values: Vec<(f64, f64)>,
    /// max over pairs of |I(t₁)t₁^{1/2+β} / (I(t₂)t₂^{1/2+β}) − 1|.
    pub max_deviation: f64,
}

/// `I(t) = ∬ |p_t(x+h) − p_t(x)|² |h|^{−1−2β} dh dx` by nested quadrature.
pub fn heat_increment_energy(beta: f64, t: f64, q: &QuadratureSpec) -> Result<QuadResult> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain(format!("beta {beta} outside (0, 1)")));
    }
    if !(t > 0.0) {
        return Err(domain(format!("t must be positive, got {t}")));
    }
    let p = |x: f64| (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
    let width = (80.0 * t).sqrt();
    let inner = q.tightened(0.05);
    let mut failed = false;
    let mut energy = |h: f64| -> f64 {
        let f = |x: f64| (p(x + h) - p(x)).powi(2);
        // Near h = 0 the x-integral is O(h²); a matching absolute floor keeps
        // the inner rule from chasing roundoff there.
        let floor = inner.rel_tol * 1e-3 * (h * h / t).min(1.0) / t.sqrt();
        let pts = [-h - width, -h, -0.5 * h, 0.0, width];
        match integrate_floor_pieces(f, &pts, &inner, floor) {
            Ok(r) => {
                failed |= !r.converged;
                r.value * h.powf(-1.0 - 2.0 * beta)
            }
            Err(_) => f64::NAN,
        }
    };
    let far = 40.0 * t.sqrt();
    // Fixed breakpoints: the outer mesh must not scale with t, or the
    // scaling check would hold by construction.
    let mut pts: Vec<f64> = [0.0, 0.3, 1.0, 3.0, 10.0]
        .into_iter()
        .filter(|&x| x < far)
        .collect();
    pts.push(far);
    let r = integrate_pieces(&mut energy, &pts, q)?;
    // For |h| ≥ far the two bumps no longer overlap: the x-integral is 2‖p_t‖².
    let norm2 = 1.0 / (8.0 * PI * t).sqrt();
    let tail = 2.0 * norm2 * far.powf(-2.0 * beta) / (2.0 * beta);
    let mut total = r
        .combine(QuadResult {
            value: tail,
            error: 0.0,
            evals: 0,
            converged: true,
        })
        .scale(2.0);
    total.converged &= !failed;
    Ok(total)
}

fn integrate_floor_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    spec: &QuadratureSpec,
    abs_tol: f64,
) -> Result<QuadResult> {
    let share = abs_tol / (points.len().max(2) - 1) as f64;
    let mut acc = QuadResult::zero();
    for w in points.windows(2) {
        if w[1] > w[0] {
            acc = acc.combine(integrate_with_floor(&mut f, w[0], w[1], spec, share)?);
        }
    }
    Ok(acc)
}

pub fn verify_kernel_scaling(
    beta: f64,
    t_list: &[f64],
    q: &QuadratureSpec,
) -> Result<KernelScalingReport> {
    let mut values = Vec::with_capacity(t_list.len());
    for &t in t_list {
        values.push((t, heat_increment_energy(beta, t, q)?.require()?.value));
    }
    let normalized: Vec<f64> = values
        .iter()
        .map(|&(t, i)| i * t.powf(0.5 + beta))
        .collect();
    let mut max_deviation: f64 = 0.0;
    for x in &normalized {
        for y in &normalized {
            max_deviation = max_deviation.max((x / y - 1.0).abs());
        }
    }
    Ok(KernelScalingReport {
        beta,
        values,
        max_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenFiniteness {
    pub value: f64,
    /// Value at each refinement level (wider truncation, tighter tolerance).
    pub levels: Vec<f64>,
    /// Relative change between the two finest levels.
    pub last_change: f64,
    pub stable: bool,
}

fn green_integral(h: f64, theta: f64, radius: f64, q: &QuadratureSpec) -> Result<f64> {
    let inner = q.tightened(0.05);
    let two_theta = 2.0 * theta;
    let mut failed = false;
    let mut profile = |shift: f64| -> f64 {
        let f = |x: f64| {
            ((-(x + shift).powi(2)).exp() - (-x * x).exp()).powi(2) * x.abs().powf(two_theta)
        };
        let lo = -shift - 7.0;
        let pts: Vec<f64> = if shift < 14.0 {
            vec![lo, -shift, 0.0, 7.0]
        } else {
            vec![lo, -shift, -shift + 7.0, -7.0, 0.0, 7.0]
        };
        let mut pts = pts;
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let floor = inner.rel_tol * 1e-3 * (shift * shift).min(1.0);
        match integrate_floor_pieces(f, &pts, &inner, floor) {
            Ok(r) => {
                failed |= !r.converged;
                r.value * shift.powf(2.0 * h - 2.0)
            }
            Err(_) => f64::NAN,
        }
    };
    let mut pts = vec![0.0, 0.5, 2.0, 8.0];
    let mut edge = 16.0;
    while edge < radius {
        pts.push(edge);
        edge *= 2.0;
    }
    pts.push(radius);
    let body = integrate_pieces(&mut profile, &pts, q)?;
    if failed || !body.converged {
        return Err(crate::error::Error::Quadrature {
            estimate: body.value,
            error: body.error,
        });
    }
    // Large-shift expansion: the x-integral tends to
    // √(π/2)·E|h − Y|^{2θ} + Γ(θ+½)2^{−θ−½}, Y ~ N(0, 1/4).
    let c0 = statrs::function::gamma::gamma(theta + 0.5) * 2f64.powf(-theta - 0.5);
    let p = two_theta + 2.0 * h - 1.0;
    let b2 = two_theta * (two_theta - 1.0) / 2.0 * 0.25;
    let b4 =
        two_theta * (two_theta - 1.0) * (two_theta - 2.0) * (two_theta - 3.0) / 24.0 * (3.0 / 16.0);
    let r = radius;
    let shifted = (PI / 2.0).sqrt()
        * (r.powf(p) / -p + b2 * r.powf(p - 2.0) / (2.0 - p) + b4 * r.powf(p - 4.0) / (4.0 - p));
    let centered = c0 * r.powf(2.0 * h - 1.0) / (1.0 - 2.0 * h);
    Ok(2.0 * (body.value + shifted + centered))
}

/// `∬ |e^{−(x+h)²} − e^{−x²}|² |h|^{2H−2} |x|^{2θ} dh dx` with a refinement
/// study; finite for `0 < θ < 1/2 − H`.
pub fn verify_green_finiteness(
    h: f64,
    theta_exp: f64,
    q: &QuadratureSpec,
) -> Result<GreenFiniteness> {
    check_hurst(h)?;
    if !(theta_exp > 0.0 && theta_exp < 0.5 - h) {
        return Err(domain(format!(
            "exponent {theta_exp} outside (0, 1/2 - H) for H = {h}"
        )));
    }
    let mut levels = Vec::new();
    for level in 0..3 {
        let spec = q.tightened(0.1f64.powi(level));
        levels.push(green_integral(
            h,
            theta_exp,
            32.0 * 2f64.powi(level),
            &spec,
        )?);
    }
    let n = levels.len();
    let value = levels[n - 1];
    let last_change = (levels[n - 1] - levels[n - 2]) / value;
    Ok(GreenFiniteness {
        value,
        last_change,
        stable: value.is_finite() && last_change.abs() <= q.rel_tol,
        levels,
    })
}
