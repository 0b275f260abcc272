//! Pseudo-spectral exponential Euler solver on the periodic domain [0, L).
//!
//! The state is kept as Fourier coefficients `û_k` of `u(x) = Σ_k û_k e^{iξ_k x}`,
//! `ξ_k = 2πk/L`. One step applies the exact heat semigroup to each mode and
//! adds the Fourier transform of `σ(u)·w`, where `w` is the spatial noise
//! increment of the step, scaled so each mode receives the exact
//! Ornstein–Uhlenbeck variance over the step.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::constants::{kappa_tilde_sq, spectral_constant};
use crate::error::{Error, Result};
use crate::io::Matrix;
use crate::model::ModelParams;
use crate::rng::{fill_normal, SeedStream};
use crate::sampler::{PathMeta, PathSample, TimeGrid};

/// Largest |u| tolerated before a trajectory is declared numerically unstable.
pub const BLOW_UP_LEVEL: f64 = 1e8;

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: ModelParams,
    #[serde(rename = "L")]
    pub length: f64,
    pub n_modes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub probes: Vec<f64>,
    pub record_stride: usize,
    pub seed: SeedStream,
    /// Apply the 2/3 rule to the noise product.
    #[serde(default)]
    pub dealias: bool,
    /// Keep the full (time × site) field; ensembles usually only need probes.
    #[serde(default = "yes")]
    pub store_field: bool,
    /// Keep every `field_stride`-th recorded row in the stored field.
    #[serde(default = "one")]
    pub field_stride: usize,
}

impl SolverConfig {
    pub fn new(
        params: ModelParams,
        length: f64,
        n_modes: usize,
        dt: f64,
        t_end: f64,
    ) -> Result<Self> {
        let cfg = SolverConfig {
            params,
            length,
            n_modes,
            dt,
            t_end,
            probes: vec![0.5 * length],
            record_stride: 1,
            seed: SeedStream::new(0, 0),
            dealias: false,
            store_field: true,
            field_stride: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_probes(mut self, probes: Vec<f64>) -> Self {
        self.probes = probes;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_seed(mut self, seed: SeedStream) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.params.validate()?;
        if !self.n_modes.is_power_of_two() || self.n_modes < 64 {
            return bad(format!(
                "n_modes must be a power of two >= 64, got {}",
                self.n_modes
            ));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return bad(format!(
                "domain length must be positive, got {}",
                self.length
            ));
        }
        if !(self.t_end > 0.0) || !(self.dt > 0.0) || self.dt > self.t_end / 64.0 * (1.0 + 1e-12) {
            return bad(format!(
                "need 0 < dt <= t_end/64, got dt={} t_end={}",
                self.dt, self.t_end
            ));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return bad(format!(
                "t_end {} is not a whole number of steps {}",
                self.t_end, self.dt
            ));
        }
        if self.record_stride == 0 || steps as usize % self.record_stride != 0 {
            return bad(format!(
                "record_stride {} must divide the {} steps",
                self.record_stride, steps
            ));
        }
        if self.field_stride == 0 {
            return bad("field_stride must be at least 1".into());
        }
        if self.probes.is_empty() || self.probes.iter().any(|&x| !(x >= 0.0 && x < self.length)) {
            return bad(format!(
                "probes must be nonempty and lie in [0, {})",
                self.length
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_modes as f64
    }

    /// Grid index nearest to each probe.
    pub fn probe_sites(&self) -> Vec<usize> {
        self.probes
            .iter()
            .map(|&x| (x / self.dx()).round() as usize % self.n_modes)
            .collect()
    }

    pub fn record_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(
            0.0,
            self.n_steps() / self.record_stride + 1,
            self.dt * self.record_stride as f64,
        )
    }

    /// Signed wavenumber of FFT slot `k`.
    fn wavenumber(&self, k: usize) -> f64 {
        let n = self.n_modes;
        let signed = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        2.0 * PI * signed / self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub times: Vec<f64>,
    /// Rows are recorded instants (every `field_stride`-th), columns grid
    /// sites; `None` when the config disabled field storage.
    #[serde(skip)]
    pub field: Option<Matrix>,
    pub probe_paths: Vec<PathSample>,
    pub config_echo: SolverConfig,
}

/// Per-mode constants shared by every step of a run.
struct Modes {
    /// Standard deviation of the noise coefficient at each slot.
    noise_sd: Vec<f64>,
    decay: Vec<f64>,
    nu: Vec<f64>,
    keep: Vec<bool>,
}

impl Modes {
    fn new(cfg: &SolverConfig) -> Result<Self> {
        let h = cfg.params.hurst;
        let theta = cfg.params.theta;
        let c11 = spectral_constant(h)?;
        let n = cfg.n_modes;
        let dk = 2.0 * PI / cfg.length;
        let mut m = Modes {
            noise_sd: vec![0.0; n],
            decay: vec![1.0; n],
            nu: vec![1.0; n],
            keep: vec![true; n],
        };
        for k in 0..n {
            let xi = cfg.wavenumber(k);
            let a = xi.abs();
            m.noise_sd[k] = if k == 0 {
                0.0
            } else {
                (c11 * a.powf(1.0 - 2.0 * h) * dk * cfg.dt).sqrt()
            };
            let x = theta * xi * xi * cfg.dt;
            m.decay[k] = (-x).exp();
            m.nu[k] = if x == 0.0 {
                1.0
            } else {
                (-(-2.0 * x).exp_m1() / (2.0 * x)).sqrt()
            };
            if cfg.dealias {
                let signed = if k <= n / 2 { k } else { n - k };
                m.keep[k] = 3 * signed <= n;
            }
        }
        Ok(m)
    }
}

/// Hermitian noise coefficients `Z_k` for one step; `Z_0 = 0`, the Nyquist
/// coefficient is real.
fn draw_coefficients(
    modes: &Modes,
    seed: SeedStream,
    step_index: u64,
    out: &mut [Complex64],
    scratch: &mut Vec<f64>,
) {
    let n = out.len();
    let half = n / 2;
    scratch.resize(n - 1, 0.0);
    fill_normal(&mut seed.block_rng(step_index), scratch);
    out[0] = Complex64::new(0.0, 0.0);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for k in 1..half {
        let s = modes.noise_sd[k] * r;
        let z = Complex64::new(s * scratch[2 * k - 2], s * scratch[2 * k - 1]);
        out[k] = z;
        out[n - k] = z.conj();
    }
    out[half] = Complex64::new(modes.noise_sd[half] * scratch[n - 2], 0.0);
}

/// The real spatial noise field of step `step_index`: `w_j = Σ_k Z_k e^{2πijk/n}`.
pub fn synthesize_noise_step(cfg: &SolverConfig, step_index: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let modes = Modes::new(cfg)?;
    let n = cfg.n_modes;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    draw_coefficients(&modes, cfg.seed, step_index, &mut buf, &mut Vec::new());
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|z| z.re).collect())
}

/// Reusable FFT plans and buffers for one trajectory.
pub struct Stepper {
    cfg: SolverConfig,
    modes: Modes,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_modes;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Stepper {
            cfg: cfg.clone(),
            modes: Modes::new(cfg)?,
            forward,
            inverse,
            work: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    /// Fourier coefficients of a physical field.
    pub fn to_spectral(&mut self, u: &[f64]) -> Vec<Complex64> {
        let inv_n = 1.0 / u.len() as f64;
        let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x * inv_n, 0.0)).collect();
        self.forward.process_with_scratch(&mut v, &mut self.scratch);
        v
    }

    /// Physical field from Fourier coefficients.
    pub fn to_physical(&mut self, state: &[Complex64], out: &mut [f64]) {
        self.work.copy_from_slice(state);
        self.inverse
            .process_with_scratch(&mut self.work, &mut self.scratch);
        for (o, z) in out.iter_mut().zip(&self.work) {
            *o = z.re;
        }
    }

    /// One exponential Euler step. `u` is the physical field matching
    /// `state`, `noise` the spatial noise field of the step.
    pub fn step(&mut self, state: &mut [Complex64], u: &[f64], noise: &[f64]) -> Result<()> {
        let n = self.cfg.n_modes;
        if state.len() != n || u.len() != n || noise.len() != n {
            return Err(Error::GridMismatch(format!(
                "state/field/noise lengths {}/{}/{} against {n} modes",
                state.len(),
                u.len(),
                noise.len()
            )));
        }
        let sigma = self.cfg.params.sigma;
        let inv_n = 1.0 / n as f64;
        for ((w, &x), &z) in self.work.iter_mut().zip(u).zip(noise) {
            *w = Complex64::new(sigma.eval(x) * z * inv_n, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.work, &mut self.scratch);
        let m = &self.modes;
        for k in 0..n {
            let forcing = if m.keep[k] {
                m.nu[k] * self.work[k]
            } else {
                Complex64::new(0.0, 0.0)
            };
            state[k] = m.decay[k] * state[k] + forcing;
        }
        Ok(())
    }
}

fn guard(step: usize, u: &[f64]) -> Result<()> {
    let max_abs = u.iter().fold(0.0f64, |m, x| {
        if x.is_finite() {
            m.max(x.abs())
        } else {
            f64::INFINITY
        }
    });
    if max_abs > BLOW_UP_LEVEL {
        return Err(Error::BlowUp { step, max_abs });
    }
    Ok(())
}

/// Run one trajectory.
pub fn solve(cfg: &SolverConfig) -> Result<FieldTrajectory> {
    cfg.validate()?;
    let n = cfg.n_modes;
    let n_steps = cfg.n_steps();
    let grid = cfg.record_grid()?;
    let sites = cfg.probe_sites();
    let dx = cfg.dx();
    let u0: Vec<f64> = (0..n)
        .map(|j| cfg.params.u0.eval(j as f64 * dx, cfg.length))
        .collect();

    let mut stepper = Stepper::new(cfg)?;
    let mut state = stepper.to_spectral(&u0);
    let mut u = u0.clone();
    let mut field = cfg.store_field.then(|| Vec::with_capacity(grid.n * n));
    let mut probes: Vec<Vec<f64>> = sites.iter().map(|_| Vec::with_capacity(grid.n)).collect();
    let mut recorded = 0usize;
    let mut record = |u: &[f64], field: &mut Option<Vec<f64>>| {
        if let Some(f) = field.as_mut() {
            if recorded % cfg.field_stride == 0 {
                f.extend_from_slice(u);
            }
        }
        recorded += 1;
        for (p, &s) in probes.iter_mut().zip(&sites) {
            p.push(u[s]);
        }
    };
    record(&u0, &mut field);

    let sigma = cfg.params.sigma;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    let mut normals = Vec::new();
    let mut noise = vec![0.0; n];
    for step in 0..n_steps {
        if sigma.is_zero() {
            for (s, d) in state.iter_mut().zip(&stepper.modes.decay) {
                *s *= *d;
            }
        } else if sigma.is_additive() {
            // σ ≡ 1: the noise product is the coefficient vector itself.
            draw_coefficients(
                &stepper.modes,
                cfg.seed,
                step as u64,
                &mut coeffs,
                &mut normals,
            );
            let m = &stepper.modes;
            for k in 0..n {
                let forcing = if m.keep[k] {
                    m.nu[k] * coeffs[k]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                state[k] = m.decay[k] * state[k] + forcing;
            }
        } else {
            draw_coefficients(
                &stepper.modes,
                cfg.seed,
                step as u64,
                &mut coeffs,
                &mut normals,
            );
            stepper
                .inverse
                .process_with_scratch(&mut coeffs, &mut stepper.scratch);
            for (w, z) in noise.iter_mut().zip(&coeffs) {
                *w = z.re;
            }
            stepper.step(&mut state, &u, &noise)?;
        }
        let recording = (step + 1) % cfg.record_stride == 0;
        let nonlinear = !sigma.is_zero() && !sigma.is_additive();
        if nonlinear || recording {
            stepper.to_physical(&state, &mut u);
            guard(step + 1, &u)?;
        }
        if recording {
            record(&u, &mut field);
        }
    }

    let field = match field {
        Some(data) => Some(Matrix::new(data.len() / n, n, data)?),
        None => None,
    };
    let kernel = format!(
        "she_solver(H={},theta={},sigma={})",
        cfg.params.hurst, cfg.params.theta, sigma
    );
    let probe_paths = probes
        .into_iter()
        .map(|values| {
            PathSample::new(
                grid,
                values,
                PathMeta {
                    kernel: kernel.clone(),
                    seed: cfg.seed,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldTrajectory {
        times: grid.times(),
        field,
        probe_paths,
        config_echo: cfg.clone(),
    })
}

/// `n_paths` trajectories; path `i` uses stream `(root, stream_index + i)`.
/// Results are returned in path order whatever the scheduling.
pub fn solve_ensemble(cfg: &SolverConfig, n_paths: usize) -> Vec<Result<FieldTrajectory>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let seed = SeedStream::new(cfg.seed.root_seed, cfg.seed.stream_index + i);
            solve(&SolverConfig {
                seed,
                ..cfg.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub t: f64,
    pub empirical: f64,
    pub target: f64,
    pub rel_dev: f64,
    /// Standard error of `empirical` over trajectories.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub rows: Vec<VarianceRow>,
    pub max_rel_dev: f64,
    pub n_paths: usize,
}

/// Compare the solver's probe variance in additive mode with the exact
/// `θ^{H−1}κ̃²t^H`. The second moment is pooled over all probes of a
/// trajectory (the field is spatially stationary) before averaging over
/// trajectories.
pub fn cross_validate_linear(
    cfg: &SolverConfig,
    times: &[f64],
    n_paths: usize,
) -> Result<CrossValidation> {
    if !cfg.params.sigma.is_additive() || !cfg.params.u0.is_zero() {
        return Err(Error::Config(
            "cross-validation needs additive noise and zero initial value".into(),
        ));
    }
    if n_paths < 2 {
        return Err(Error::Config(
            "cross-validation needs at least two trajectories".into(),
        ));
    }
    let grid = cfg.record_grid()?;
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            let i = (t / grid.dt).round();
            if (i * grid.dt - t).abs() > 1e-9 * t.max(grid.dt) || i as usize >= grid.n {
                Err(Error::GridMismatch(format!(
                    "time {t} is not on the recording grid"
                )))
            } else {
                Ok(i as usize)
            }
        })
        .collect::<Result<_>>()?;
    let light = SolverConfig {
        store_field: false,
        ..cfg.clone()
    };
    let per_path: Vec<Vec<f64>> = solve_ensemble(&light, n_paths)
        .into_iter()
        .map(|r| {
            r.map(|traj| {
                let k = traj.probe_paths.len() as f64;
                idx.iter()
                    .map(|&i| {
                        traj.probe_paths
                            .iter()
                            .map(|p| p.values[i].powi(2))
                            .sum::<f64>()
                            / k
                    })
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let h = cfg.params.hurst;
    let scale = cfg.params.theta.powf(h - 1.0) * kappa_tilde_sq(h)?;
    let m = n_paths as f64;
    let mut rows = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let mean = per_path.iter().map(|v| v[j]).sum::<f64>() / m;
        let var = per_path.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let target = scale * t.powf(h);
        rows.push(VarianceRow {
            t,
            empirical: mean,
            target,
            rel_dev: (mean - target).abs() / target,
            stderr: (var / m).sqrt(),
        });
    }
    let max_rel_dev = rows.iter().map(|r| r.rel_dev).fold(0.0, f64::max);
    Ok(CrossValidation {
        rows,
        max_rel_dev,
        n_paths,
    })
}
