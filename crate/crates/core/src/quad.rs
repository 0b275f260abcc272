//! Globally adaptive Gauss–Kronrod quadrature on finite intervals.
//!
//! Infinite ranges are handled by callers, which truncate where an analytic
//! tail takes over.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// 7-point Gauss / 15-point Kronrod pair with global bisection.
    GaussKronrod15,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: Rule,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, max_evals: usize) -> Result<Self> {
        if !(1e-10..=1e-3).contains(&rel_tol) {
            return Err(Error::Config(format!(
                "rel_tol {rel_tol:e} outside [1e-10, 1e-3]"
            )));
        }
        if max_evals < 15 {
            return Err(Error::Config(
                "max_evals must allow at least one rule application".into(),
            ));
        }
        Ok(QuadratureSpec {
            rule: Rule::GaussKronrod15,
            rel_tol,
            max_evals,
        })
    }

    /// Same budget, tighter tolerance; used for inner integrals of nested rules.
    pub fn tightened(&self, factor: f64) -> Self {
        QuadratureSpec {
            rel_tol: (self.rel_tol * factor).max(1e-14),
            ..*self
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rule: Rule::GaussKronrod15,
            rel_tol: 1e-8,
            max_evals: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    pub evals: usize,
    /// `false` when the budget ran out before the tolerance was met; `value`
    /// is then the best available estimate.
    pub converged: bool,
}

impl QuadResult {
    pub fn zero() -> Self {
        QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
            converged: true,
        }
    }

    pub fn achieved_rel_tol(&self) -> f64 {
        if self.value == 0.0 {
            self.error
        } else {
            self.error / self.value.abs()
        }
    }

    /// Sum of independent pieces.
    pub fn combine(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            error: self.error + other.error,
            evals: self.evals + other.evals,
            converged: self.converged && other.converged,
        }
    }

    pub fn scale(self, c: f64) -> QuadResult {
        QuadResult {
            value: c * self.value,
            error: c.abs() * self.error,
            ..self
        }
    }

    /// Turn a non-converged result into an error.
    pub fn require(self) -> Result<QuadResult> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Quadrature {
                estimate: self.value,
                error: self.error,
            })
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

/// Integrate `f` over `[a, b]` to relative tolerance `spec.rel_tol`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    integrate_with_floor(f, a, b, spec, 0.0)
}

/// As [`integrate`], but also accept an absolute error below `abs_tol`.
pub fn integrate_with_floor<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
    abs_tol: f64,
) -> Result<QuadResult> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult::zero());
    }
    let (value, error) = kronrod15(&mut f, a, b);
    let mut evals = 15;
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let done =
        |total: f64, err: f64| err <= (spec.rel_tol * total.abs()).max(abs_tol) || err == 0.0;
    while !done(total, total_err) {
        if evals + 30 > spec.max_evals {
            break;
        }
        let seg = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval no longer divisible in floating point.
            heap.push(seg);
            break;
        }
        let (v1, e1) = kronrod15(&mut f, seg.a, mid);
        let (v2, e2) = kronrod15(&mut f, mid, seg.b);
        evals += 30;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the drift of the running totals.
    let mut segs = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = segs.iter().map(|s| s.value).sum();
    let error: f64 = segs.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        evals,
        converged: done(value, error),
    })
}

/// Integrate over consecutive breakpoints `points[0] < points[1] < ...`,
/// splitting the tolerance so that the sum meets `spec.rel_tol`.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    let mut acc = QuadResult::zero();
    for w in points.windows(2) {
        if w[1] > w[0] {
            acc = acc.combine(integrate(&mut f, w[0], w[1], spec)?);
        }
    }
    Ok(acc)
}
