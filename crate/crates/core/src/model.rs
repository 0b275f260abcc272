//! Model description: Hurst index, diffusivity, diffusion coefficient and
//! initial condition.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{HURST_MAX, HURST_MIN};
use crate::error::{Error, Result};

/// Diffusion coefficient σ from the shipped registry.
///
/// Every entry except [`SigmaSpec::Additive`] satisfies σ(0) = 0 and is
/// globally Lipschitz. The additive mode σ ≡ 1 is reserved for the linear
/// equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SigmaSpec {
    /// σ(u) = a·u
    Linear(f64),
    /// σ(u) = sin(a·u)
    Sin(f64),
    /// σ(u) = a·tanh(u)
    Tanh(f64),
    /// σ ≡ 1
    Additive,
}

impl SigmaSpec {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SigmaSpec::Linear(a) => a * u,
            SigmaSpec::Sin(a) => (a * u).sin(),
            SigmaSpec::Tanh(a) => a * u.tanh(),
            SigmaSpec::Additive => 1.0,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            SigmaSpec::Linear(_) => "linear",
            SigmaSpec::Sin(_) => "sin",
            SigmaSpec::Tanh(_) => "tanh",
            SigmaSpec::Additive => "additive",
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            SigmaSpec::Linear(a) | SigmaSpec::Sin(a) | SigmaSpec::Tanh(a) => vec![a],
            SigmaSpec::Additive => Vec::new(),
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, SigmaSpec::Additive)
    }

    /// σ ≡ 0, in which case the equation is deterministic heat flow.
    pub fn is_zero(&self) -> bool {
        match *self {
            SigmaSpec::Linear(a) | SigmaSpec::Sin(a) | SigmaSpec::Tanh(a) => a == 0.0,
            SigmaSpec::Additive => false,
        }
    }

    /// Largest difference quotient over a uniform sample of [−10, 10].
    pub fn lipschitz_estimate(&self) -> f64 {
        let n = 4001;
        let step = 20.0 / (n - 1) as f64;
        let mut best: f64 = 0.0;
        let mut prev = self.eval(-10.0);
        for i in 1..n {
            let cur = self.eval(-10.0 + i as f64 * step);
            best = best.max((cur - prev).abs() / step);
            prev = cur;
        }
        best
    }

    /// Registration checks: σ(0) = 0 (outside additive mode) and a finite
    /// Lipschitz estimate.
    pub fn validate(&self) -> Result<()> {
        for p in self.parameters() {
            if !p.is_finite() {
                return Err(Error::Config(format!("sigma parameter {p} is not finite")));
            }
        }
        if !self.is_additive() && self.eval(0.0).abs() >= 1e-14 {
            return Err(Error::Config(format!("sigma {self} does not vanish at 0")));
        }
        if !self.lipschitz_estimate().is_finite() {
            return Err(Error::Config(format!(
                "sigma {self} is not Lipschitz on [-10, 10]"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Additive => write!(f, "additive"),
            s => write!(f, "{}:{}", s.id(), s.parameters()[0]),
        }
    }
}

fn parse_params(s: &str, what: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} parameter '{p}'")))
        })
        .collect()
}

impl FromStr for SigmaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (id, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(rest, "sigma")?;
        let one = |default: f64| -> Result<f64> {
            match params.as_slice() {
                [] => Ok(default),
                [a] => Ok(*a),
                _ => Err(Error::Config(format!("sigma '{s}' takes one parameter"))),
            }
        };
        let spec = match id.trim() {
            "linear" => SigmaSpec::Linear(one(1.0)?),
            "sin" => SigmaSpec::Sin(one(1.0)?),
            "tanh" => SigmaSpec::Tanh(one(1.0)?),
            "additive" if params.is_empty() => SigmaSpec::Additive,
            _ => return Err(Error::Config(format!("unknown sigma '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for SigmaSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SigmaSpec> for String {
    fn from(s: SigmaSpec) -> String {
        s.to_string()
    }
}

/// Initial conditions shipped with the solver. All are smooth and periodic
/// on [0, L), so their Hölder order is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialCondition {
    Zero,
    /// `amplitude · exp(−(L/(π·width))² sin²(π(x − center)/L))`: a periodic
    /// bump of roughly Gaussian shape around `center`.
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `mean + amplitude · cos(2π·mode·x/L)`
    Cosine {
        mean: f64,
        amplitude: f64,
        mode: u32,
    },
}

impl InitialCondition {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Bump {
                amplitude,
                center,
                width,
            } => {
                let s = (PI * (x - center) / length).sin();
                let scale = length / (PI * width);
                amplitude * (-(scale * s).powi(2)).exp()
            }
            InitialCondition::Cosine {
                mean,
                amplitude,
                mode,
            } => mean + amplitude * (2.0 * PI * mode as f64 * x / length).cos(),
        }
    }

    /// Hölder order β₀ of the initial datum.
    pub fn holder_order(&self) -> f64 {
        1.0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InitialCondition::Zero)
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InitialCondition::Zero => write!(f, "zero"),
            InitialCondition::Bump {
                amplitude,
                center,
                width,
            } => {
                write!(f, "bump:{amplitude},{center},{width}")
            }
            InitialCondition::Cosine {
                mean,
                amplitude,
                mode,
            } => {
                write!(f, "cosine:{mean},{amplitude},{mode}")
            }
        }
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (id, rest) = s.split_once(':').unwrap_or((s, ""));
        let p = parse_params(rest, "initial condition")?;
        let ic = match (id.trim(), p.as_slice()) {
            ("zero", []) => InitialCondition::Zero,
            ("bump", []) => InitialCondition::Bump {
                amplitude: 1.0,
                center: 0.0,
                width: 1.0,
            },
            ("bump", [a, c, w]) if *w > 0.0 => InitialCondition::Bump {
                amplitude: *a,
                center: *c,
                width: *w,
            },
            ("cosine", []) => InitialCondition::Cosine {
                mean: 1.0,
                amplitude: 0.5,
                mode: 1,
            },
            ("cosine", [m, a]) => InitialCondition::Cosine {
                mean: *m,
                amplitude: *a,
                mode: 1,
            },
            ("cosine", [m, a, k]) if *k >= 0.0 && k.fract() == 0.0 => InitialCondition::Cosine {
                mean: *m,
                amplitude: *a,
                mode: *k as u32,
            },
            _ => return Err(Error::Config(format!("unknown initial condition '{s}'"))),
        };
        Ok(ic)
    }
}

impl TryFrom<String> for InitialCondition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialCondition> for String {
    fn from(s: InitialCondition) -> String {
        s.to_string()
    }
}

/// Parameters of ∂ₜu = θ∂²ₓu + σ(u)Ẇ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hurst: f64,
    pub theta: f64,
    pub sigma: SigmaSpec,
    pub u0: InitialCondition,
    /// Admit H = 1/2 (space-time white noise).
    #[serde(default)]
    pub white_noise: bool,
}

impl ModelParams {
    pub fn new(hurst: f64, theta: f64, sigma: SigmaSpec, u0: InitialCondition) -> Result<Self> {
        let p = ModelParams {
            hurst,
            theta,
            sigma,
            u0,
            white_noise: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Linear equation with additive noise and zero initial value.
    pub fn linear(hurst: f64, theta: f64) -> Result<Self> {
        Self::new(hurst, theta, SigmaSpec::Additive, InitialCondition::Zero)
    }

    pub fn with_white_noise(mut self, allow: bool) -> Self {
        self.white_noise = allow;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hurst;
        let rough = h > HURST_MIN && h < HURST_MAX;
        let white = h == HURST_MAX && self.white_noise;
        if !(rough || white) {
            return Err(Error::Config(format!(
                "Hurst index {h} must lie in (1/4, 1/2) (1/2 needs the white-noise flag)"
            )));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::Config(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        self.sigma.validate()
    }

    pub fn regularity(&self) -> RegularityMeta {
        RegularityMeta::new(self.hurst, self.u0.holder_order())
    }
}

/// Regularity bookkeeping for reports; nothing numerical depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityMeta {
    pub beta0: f64,
    pub vartheta0: f64,
    /// Supremum of the admissible error-exponent interval.
    pub delta_max: f64,
}

impl RegularityMeta {
    pub fn new(hurst: f64, beta0: f64) -> Self {
        let h = hurst;
        let vartheta0 = 0.5 * h.min(beta0);
        let first = (2.0 - h) * vartheta0 / (2.0 * (2.0 + vartheta0));
        let second = (2.0 - h) * (1.0 - 2.0 * h) / (2.0 * (5.0 - 2.0 * h));
        RegularityMeta {
            beta0,
            vartheta0,
            delta_max: first.min(second),
        }
    }
}
