//! Exact Gaussian path samplers.
//!
//! Two routes are provided: a dense Cholesky sampler that works for any
//! covariance kernel on a uniform grid, and a circulant-embedding sampler for
//! stationary fractional Gaussian noise. Factorizations of self-similar
//! kernels are computed on the unit-step grid and rescaled, and are cached
//! so that repeated ensembles on the same grid factor only once.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::{self, check_hurst, fbm_unit, kappa_sq, linear_she_unit, t_process_unit};
use crate::error::{domain, Error, Result};
use crate::rng::{fill_normal, SeedStream};

/// Uniform time grid `t0, t0 + dt, ..., t0 + (n−1)dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub n: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, n: usize, dt: f64) -> Result<Self> {
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(domain(format!(
                "grid start {t0} must be a nonnegative time"
            )));
        }
        if n < 2 {
            return Err(domain(format!("grid needs at least 2 points, got {n}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(domain(format!("grid spacing {dt} must be positive")));
        }
        Ok(TimeGrid { t0, n, dt })
    }

    /// The grid `t_i = i/N`, `i = 0..=N`, on [0, 1].
    pub fn dyadic(intervals: usize) -> Result<Self> {
        Self::new(0.0, intervals + 1, 1.0 / intervals as f64)
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n - 1)
    }

    /// Every `stride`-th point of this grid, starting at the first.
    pub fn thinned(&self, stride: usize) -> Result<Self> {
        if stride == 0 || (self.n - 1) % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide the {} intervals of the grid",
                self.n - 1
            )));
        }
        Self::new(self.t0, (self.n - 1) / stride + 1, self.dt * stride as f64)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub kernel: String,
    pub seed: SeedStream,
}

/// One realization of a process on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl PathSample {
    pub fn new(grid: TimeGrid, values: Vec<f64>, meta: PathMeta) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        Ok(PathSample { grid, values, meta })
    }

    /// A path with no provenance, e.g. synthetic test input.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(
            grid,
            values,
            PathMeta {
                kernel: "external".into(),
                seed: SeedStream::new(0, 0),
            },
        )
    }

    pub fn scaled(&self, c: f64) -> PathSample {
        PathSample {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Every `stride`-th value.
    pub fn thinned(&self, stride: usize) -> Result<PathSample> {
        let grid = self.grid.thinned(stride)?;
        let values = self.values.iter().step_by(stride).copied().collect();
        PathSample::new(grid, values, self.meta.clone())
    }
}

/// A covariance function on [0, ∞)².
pub trait Kernel: Sync {
    fn cov(&self, s: f64, t: f64) -> f64;

    /// Stable identifier including every parameter; used for caching and
    /// path provenance.
    fn id(&self) -> String;

    /// `Some(α)` when `cov(a s, a t) = a^α cov(s, t)` for all `a > 0`.
    fn self_similarity(&self) -> Option<f64> {
        None
    }
}

/// fBm covariance with Hurst index `hurst`.
#[derive(Debug, Clone, Copy)]
pub struct FbmKernel {
    hurst: f64,
}

impl FbmKernel {
    pub fn new(hurst: f64) -> Result<Self> {
        constants::cov_fbm(1.0, 1.0, hurst)?;
        Ok(FbmKernel { hurst })
    }
}

impl Kernel for FbmKernel {
    fn cov(&self, s: f64, t: f64) -> f64 {
        fbm_unit(s, t, self.hurst)
    }
    fn id(&self) -> String {
        format!("fbm(hurst={})", self.hurst)
    }
    fn self_similarity(&self) -> Option<f64> {
        Some(2.0 * self.hurst)
    }
}

/// Temporal covariance of the linear equation at a fixed site.
#[derive(Debug, Clone, Copy)]
pub struct LinearSheKernel {
    h: f64,
    theta: f64,
    scale: f64,
}

impl LinearSheKernel {
    pub fn new(h: f64, theta: f64) -> Result<Self> {
        constants::cov_linear_she(1.0, 1.0, h, theta)?;
        Ok(LinearSheKernel {
            h,
            theta,
            scale: kappa_sq(h)? * theta.powf(h - 1.0),
        })
    }
}

impl Kernel for LinearSheKernel {
    fn cov(&self, s: f64, t: f64) -> f64 {
        linear_she_unit(s, t, self.h, self.scale)
    }
    fn id(&self) -> String {
        format!("linear_she(H={},theta={})", self.h, self.theta)
    }
    fn self_similarity(&self) -> Option<f64> {
        Some(self.h)
    }
}

/// Covariance of the smooth correction process.
#[derive(Debug, Clone, Copy)]
pub struct TProcessKernel {
    h: f64,
    k2: f64,
}

impl TProcessKernel {
    pub fn new(h: f64) -> Result<Self> {
        Ok(TProcessKernel {
            h,
            k2: kappa_sq(h)?,
        })
    }
}

impl Kernel for TProcessKernel {
    fn cov(&self, s: f64, t: f64) -> f64 {
        t_process_unit(s, t, self.h, self.k2)
    }
    fn id(&self) -> String {
        format!("t_process(H={})", self.h)
    }
    fn self_similarity(&self) -> Option<f64> {
        Some(self.h)
    }
}

/// Adapter for an arbitrary covariance closure.
pub struct FnKernel<F> {
    name: String,
    f: F,
}

impl<F: Fn(f64, f64) -> f64 + Sync> FnKernel<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnKernel {
            name: name.into(),
            f,
        }
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> Kernel for FnKernel<F> {
    fn cov(&self, s: f64, t: f64) -> f64 {
        (self.f)(s, t)
    }
    fn id(&self) -> String {
        self.name.clone()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

const JITTER_LEVELS: [f64; 6] = [0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10];
const ROW_BLOCK: usize = 32;

/// Lower Cholesky factor of a Gram matrix, packed by rows.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    /// Grid indices whose variance is nonzero; the rest are pinned to 0.
    active: Vec<usize>,
    n_grid: usize,
    packed: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    /// Factor the Gram matrix of `kernel` on `times`, escalating diagonal
    /// jitter `λ·trace/m` through λ ∈ {0, 1e−14, …, 1e−10}.
    pub fn new<K: Kernel + ?Sized>(kernel: &K, times: &[f64]) -> Result<Self> {
        let active: Vec<usize> = (0..times.len())
            .filter(|&i| kernel.cov(times[i], times[i]) != 0.0)
            .collect();
        let m = active.len();
        let mut gram = vec![0.0; row_start(m)];
        for (r, &i) in active.iter().enumerate() {
            let off = row_start(r);
            for (c, &j) in active[..=r].iter().enumerate() {
                gram[off + c] = kernel.cov(times[i], times[j]);
            }
        }
        for v in gram.iter() {
            if !v.is_finite() {
                return Err(domain(format!(
                    "kernel {} produced a non-finite covariance",
                    kernel.id()
                )));
            }
        }
        let trace: f64 = (0..m).map(|r| gram[row_start(r) + r]).sum();
        let mut last_pivot = 0;
        for &lambda in JITTER_LEVELS.iter() {
            let jitter = lambda * trace / m.max(1) as f64;
            let mut packed = gram.clone();
            for r in 0..m {
                packed[row_start(r) + r] += jitter;
            }
            match factor_packed(&mut packed, m) {
                Ok(()) => {
                    if lambda > 0.0 {
                        log::debug!("{}: factorization needed jitter {lambda:e}", kernel.id());
                    }
                    return Ok(CholeskyFactor {
                        active,
                        n_grid: times.len(),
                        packed,
                        jitter,
                    });
                }
                Err(pivot) => last_pivot = pivot,
            }
        }
        Err(Error::Factorization {
            pivot: last_pivot,
            jitter: JITTER_LEVELS[5] * trace / m.max(1) as f64,
        })
    }

    /// Diagonal jitter that was needed, in absolute units.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.n_grid
    }

    /// Draw one path: `L z` scattered onto the grid, zeros elsewhere.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R, scale: f64) -> Vec<f64> {
        let m = self.active.len();
        let mut z = vec![0.0; m];
        fill_normal(rng, &mut z);
        let mut out = vec![0.0; self.n_grid];
        for (r, &i) in self.active.iter().enumerate() {
            let off = row_start(r);
            out[i] = scale * dot(&self.packed[off..off + r + 1], &z[..r + 1]);
        }
        out
    }
}

/// In-place Cholesky of a packed row-major lower triangle. Rows are processed
/// in blocks so that every previously finished row is streamed once per
/// block rather than once per row. Returns the failing pivot on breakdown.
fn factor_packed(a: &mut [f64], n: usize) -> std::result::Result<(), usize> {
    let mut ib = 0;
    while ib < n {
        let ie = (ib + ROW_BLOCK).min(n);
        let split = row_start(ib);
        let (head, tail) = a.split_at_mut(split);
        for j in 0..ib {
            let rj = row_start(j);
            let lj = &head[rj..rj + j];
            let inv = 1.0 / head[rj + j];
            for i in ib..ie {
                let ri = row_start(i) - split;
                let row = &mut tail[ri..ri + i + 1];
                let s = row[j] - dot(&row[..j], lj);
                row[j] = s * inv;
            }
        }
        for i in ib..ie {
            for j in ib..=i {
                let ri = row_start(i) - split;
                let rj = row_start(j) - split;
                let s = tail[ri + j] - dot(&tail[ri..ri + j], &tail[rj..rj + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(i);
                    }
                    tail[ri + i] = s.sqrt();
                } else {
                    tail[ri + j] = s / tail[rj + j];
                }
            }
        }
        ib = ie;
    }
    Ok(())
}

type CacheKey = (String, u64, u64, usize);

/// Shared store of factorizations keyed by kernel identity and grid.
#[derive(Default)]
pub struct FactorCache {
    entries: Mutex<HashMap<CacheKey, Arc<CholeskyFactor>>>,
}

const CACHE_CAPACITY: usize = 8;

impl FactorCache {
    pub fn global() -> &'static FactorCache {
        static CACHE: OnceLock<FactorCache> = OnceLock::new();
        CACHE.get_or_init(FactorCache::default)
    }

    /// Factor for `kernel` on `grid`, together with the amplitude by which
    /// its samples must be multiplied. Self-similar kernels are factored on
    /// the unit-step grid.
    pub fn factor<K: Kernel + ?Sized>(
        &self,
        kernel: &K,
        grid: &TimeGrid,
    ) -> Result<(Arc<CholeskyFactor>, f64)> {
        let (t0, dt, scale) = match kernel.self_similarity() {
            Some(alpha) => (grid.t0 / grid.dt, 1.0, grid.dt.powf(0.5 * alpha)),
            None => (grid.t0, grid.dt, 1.0),
        };
        let key = (kernel.id(), t0.to_bits(), dt.to_bits(), grid.n);
        if let Some(f) = self.entries.lock().expect("cache poisoned").get(&key) {
            return Ok((Arc::clone(f), scale));
        }
        let times: Vec<f64> = (0..grid.n).map(|i| t0 + i as f64 * dt).collect();
        let factor = Arc::new(CholeskyFactor::new(kernel, &times)?);
        let mut entries = self.entries.lock().expect("cache poisoned");
        if entries.len() >= CACHE_CAPACITY {
            entries.clear();
        }
        let stored = entries.entry(key).or_insert_with(|| Arc::clone(&factor));
        Ok((Arc::clone(stored), scale))
    }
}

/// Exact samples of the centered Gaussian process with covariance `kernel`
/// on `grid`. Path `i` uses stream `(seed.root_seed, seed.stream_index + i)`.
pub fn cholesky_sample<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &TimeGrid,
    seed: SeedStream,
    n_paths: usize,
) -> Result<Vec<PathSample>> {
    if grid.n > 1 << 13 {
        return Err(domain(format!(
            "dense sampler limited to 8192 points, got {}",
            grid.n
        )));
    }
    let (factor, scale) = FactorCache::global().factor(kernel, grid)?;
    let id = kernel.id();
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let stream = SeedStream::new(seed.root_seed, seed.stream_index + i);
            let values = factor.sample(&mut stream.rng(), scale);
            PathSample {
                grid: *grid,
                values,
                meta: PathMeta {
                    kernel: id.clone(),
                    seed: stream,
                },
            }
        })
        .collect();
    Ok(paths)
}

/// Fractional Gaussian noise of length `n` with unit-lag autocovariance
/// ½(|k+1|^{2h} + |k−1|^{2h} − 2|k|^{2h}), by circulant embedding.
///
/// Falls back to the dense sampler when the embedding has a materially
/// negative eigenvalue.
pub fn fgn_circulant(n: usize, hurst: f64, seed: SeedStream) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(domain(format!("fGn Hurst index {hurst} outside (0, 1)")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = 2 * n;
    let e = 2.0 * hurst;
    let mut c: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex64::new(constants::rho(lag as i64, e), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let max_eig = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let min_eig = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
    if min_eig < -1e-9 * max_eig {
        log::warn!("circulant embedding of fGn(hurst={hurst}, n={n}) not PSD (min eigenvalue {min_eig:e}); using Cholesky");
        let kernel = FnKernel::new(format!("fgn(hurst={hurst})"), move |s: f64, t: f64| {
            constants::rho((s - t).round() as i64, e)
        });
        let grid = TimeGrid::new(0.0, n.max(2), 1.0)?;
        let factor = CholeskyFactor::new(&kernel, &grid.times())?;
        let mut v = factor.sample(&mut seed.rng(), 1.0);
        v.truncate(n);
        return Ok(v);
    }
    let mut rng = seed.rng();
    let mut z = vec![0.0; 2 * m];
    fill_normal(&mut rng, &mut z);
    let mut w: Vec<Complex64> = (0..m)
        .map(|k| {
            let amp = (c[k].re.max(0.0) / m as f64).sqrt();
            Complex64::new(amp * z[2 * k], amp * z[2 * k + 1])
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|z| z.re).collect())
}

/// fBm(hurst) on `TimeGrid::dyadic(n)` built from cumulative sums of fGn.
pub fn fbm_circulant(n: usize, hurst: f64, seed: SeedStream) -> Result<PathSample> {
    let inc = fgn_circulant(n, hurst, seed)?;
    let scale = (n as f64).powf(-hurst);
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for x in inc {
        acc += x;
        values.push(scale * acc);
    }
    PathSample::new(
        TimeGrid::dyadic(n)?,
        values,
        PathMeta {
            kernel: format!("fbm_circulant(hurst={hurst})"),
            seed,
        },
    )
}

/// Exact samples of `t ↦ v(t, x)` for the linear equation with diffusivity
/// `theta`. The law does not depend on the site `x`.
pub fn sample_linear_she(
    grid: &TimeGrid,
    h: f64,
    theta: f64,
    seed: SeedStream,
    n_paths: usize,
) -> Result<Vec<PathSample>> {
    cholesky_sample(&LinearSheKernel::new(h, theta)?, grid, seed, n_paths)
}

/// Exact samples of the smooth process `T` that completes `v` to an fBm.
pub fn sample_t_process(
    grid: &TimeGrid,
    h: f64,
    seed: SeedStream,
    n_paths: usize,
) -> Result<Vec<PathSample>> {
    cholesky_sample(&TProcessKernel::new(h)?, grid, seed, n_paths)
}

/// Deviation of the empirical covariance of κ⁻¹(v + T) from the fBm(H/2)
/// covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDiagnostic {
    /// max over grid pairs of |empirical − exact|.
    pub max_abs_dev: f64,
    /// max over grid pairs of |empirical − exact| / (MC standard error).
    pub max_z: f64,
    pub n_pairs: usize,
}

pub fn decompose_check(
    v_paths: &[PathSample],
    t_paths: &[PathSample],
    h: f64,
) -> Result<DecompositionDiagnostic> {
    check_hurst(h)?;
    if v_paths.is_empty() || v_paths.len() != t_paths.len() {
        return Err(Error::GridMismatch(format!(
            "{} v paths against {} T paths",
            v_paths.len(),
            t_paths.len()
        )));
    }
    let grid = v_paths[0].grid;
    for p in v_paths.iter().chain(t_paths) {
        if !p.grid.same_as(&grid) {
            return Err(Error::GridMismatch(
                "v and T paths must share one grid".into(),
            ));
        }
    }
    let inv_kappa = 1.0 / constants::kappa(h)?;
    let xs: Vec<Vec<f64>> = v_paths
        .iter()
        .zip(t_paths)
        .map(|(v, t)| {
            v.values
                .iter()
                .zip(&t.values)
                .map(|(a, b)| inv_kappa * (a + b))
                .collect()
        })
        .collect();
    let m = xs.len() as f64;
    let times = grid.times();
    let rows: Vec<(f64, f64)> = (0..grid.n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0f64, 0.0f64);
            for j in 0..=i {
                let (mut s1, mut s2) = (0.0, 0.0);
                for x in &xs {
                    let p = x[i] * x[j];
                    s1 += p;
                    s2 += p * p;
                }
                let mean = s1 / m;
                let dev = (mean - fbm_unit(times[i], times[j], 0.5 * h)).abs();
                let var = (s2 / m - mean * mean).max(0.0);
                let se = (var / m).sqrt();
                let z = if se > 0.0 {
                    dev / se
                } else if dev > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                best = (best.0.max(dev), best.1.max(z));
            }
            best
        })
        .collect();
    let (max_abs_dev, max_z) = rows
        .iter()
        .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(DecompositionDiagnostic {
        max_abs_dev,
        max_z,
        n_pairs: v_paths.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empirical_cov(paths: &[PathSample], i: usize, j: usize) -> (f64, f64) {
        let m = paths.len() as f64;
        let prods: Vec<f64> = paths.iter().map(|p| p.values[i] * p.values[j]).collect();
        let mean = prods.iter().sum::<f64>() / m;
        let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1, 0.1).is_err());
        assert!(TimeGrid::new(-1.0, 4, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 4, 0.0).is_err());
        let g = TimeGrid::dyadic(8).unwrap();
        assert_eq!(g.n, 9);
        assert_eq!(g.t_end(), 1.0);
        let t = g.thinned(4).unwrap();
        assert_eq!((t.n, t.dt), (3, 0.5));
        assert!(g.thinned(3).is_err());
    }

    #[test]
    fn packed_cholesky_reconstructs() {
        let k = FbmKernel::new(0.3).unwrap();
        let times: Vec<f64> = (1..=70).map(|i| i as f64 * 0.013).collect();
        let f = CholeskyFactor::new(&k, &times).unwrap();
        let n = times.len();
        for i in 0..n {
            for j in 0..=i {
                let li = &f.packed[row_start(i)..row_start(i) + j + 1];
                let lj = &f.packed[row_start(j)..row_start(j) + j + 1];
                let rec = dot(li, lj);
                assert!((rec - k.cov(times[i], times[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_variance_points_are_pinned() {
        let grid = TimeGrid::new(0.0, 2, 0.5).unwrap();
        let paths = sample_linear_she(&grid, 0.3, 1.0, SeedStream::new(3, 0), 5).unwrap();
        for p in &paths {
            assert_eq!(p.values[0], 0.0);
            assert!(p.values[1] != 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = TimeGrid::dyadic(64).unwrap();
        let k = FbmKernel::new(0.15).unwrap();
        let a = cholesky_sample(&k, &grid, SeedStream::new(5, 10), 3).unwrap();
        let b = cholesky_sample(&k, &grid, SeedStream::new(5, 10), 3).unwrap();
        assert_eq!(a, b);
        let c = cholesky_sample(&k, &grid, SeedStream::new(5, 11), 1).unwrap();
        assert_eq!(a[1].values, c[0].values);
    }

    #[test]
    fn non_psd_kernel_fails() {
        let k = FnKernel::new("bad", |s: f64, t: f64| if s == t { 1.0 } else { 2.0 });
        let err = CholeskyFactor::new(&k, &[0.1, 0.2, 0.3]).unwrap_err();
        assert!(matches!(err, Error::Factorization { .. }));
    }

    #[test]
    fn shipped_kernels_match_gram_in_law() {
        let grid = TimeGrid::new(0.1, 12, 0.15).unwrap();
        let m = 10_000;
        let kernels: Vec<Box<dyn Kernel>> = vec![
            Box::new(FbmKernel::new(0.15).unwrap()),
            Box::new(LinearSheKernel::new(0.3, 1.7).unwrap()),
            Box::new(TProcessKernel::new(0.3).unwrap()),
        ];
        for k in &kernels {
            let paths = cholesky_sample(k.as_ref(), &grid, SeedStream::new(77, 0), m).unwrap();
            for i in 0..grid.n {
                for j in 0..=i {
                    let (c, se) = empirical_cov(&paths, i, j);
                    let exact = k.cov(grid.time(i), grid.time(j));
                    assert!(
                        (c - exact).abs() < 5.0 * se,
                        "{} ({i},{j}): {c} vs {exact}",
                        k.id()
                    );
                }
            }
        }
    }

    #[test]
    fn circulant_matches_fgn_autocovariance() {
        let n = 1 << 14;
        let x = fgn_circulant(n, 0.15, SeedStream::new(1, 0)).unwrap();
        let nf = n as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / nf;
        assert!(
            (var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt() * 2.0,
            "var {var}"
        );
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (nf - 1.0);
        // Variance of the lag-1 product for a Gaussian pair is 1 + ρ², and the
        // sum over a short-memory sequence inflates it by Σρ²-type factors.
        let se = ((1.0 + 0.3844f64.powi(2)) * 2.0 / nf).sqrt();
        assert!(
            (lag1 - constants::rho(1, 0.3)).abs() < 4.0 * se,
            "lag1 {lag1}"
        );
    }

    #[test]
    fn circulant_brownian_case_is_white() {
        let n = 1 << 14;
        let x = fgn_circulant(n, 0.5, SeedStream::new(2, 0)).unwrap();
        let nf = n as f64;
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (nf - 1.0);
        assert!(lag1.abs() < 4.0 / nf.sqrt());
        let var = x.iter().map(|v| v * v).sum::<f64>() / nf;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn circulant_and_cholesky_agree() {
        let n = 64;
        let reps = 2_000;
        let hurst = 0.15;
        let kernel = FnKernel::new("fgn(0.15)", move |s: f64, t: f64| {
            constants::rho((s - t).round() as i64, 2.0 * hurst)
        });
        let grid = TimeGrid::new(0.0, n, 1.0).unwrap();
        let chol = cholesky_sample(&kernel, &grid, SeedStream::new(8, 0), reps).unwrap();
        for lag in [1usize, 2, 5] {
            let stat = |xs: &mut dyn Iterator<Item = Vec<f64>>| {
                let vals: Vec<f64> = xs
                    .map(|x| {
                        x.windows(lag + 1).map(|w| w[0] * w[lag]).sum::<f64>() / (n - lag) as f64
                    })
                    .collect();
                let m = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (mean, var / m)
            };
            let (mc, vc) = stat(&mut chol.iter().map(|p| p.values.clone()));
            let (mf, vf) = stat(
                &mut (0..reps as u64)
                    .map(|i| fgn_circulant(n, hurst, SeedStream::new(9, i)).unwrap()),
            );
            assert!(
                (mc - mf).abs() < 5.0 * (vc + vf).sqrt(),
                "lag {lag}: {mc} vs {mf}"
            );
        }
    }

    #[test]
    fn fbm_sampler_self_similarity() {
        // Rescaling time by a and values by a^{-hurst} leaves second moments unchanged.
        let hurst = 0.15;
        let k = FbmKernel::new(hurst).unwrap();
        let a = 4.0;
        let g1 = TimeGrid::new(0.0, 9, 0.125).unwrap();
        let g2 = TimeGrid::new(0.0, 9, 0.125 * a).unwrap();
        let p1 = cholesky_sample(&k, &g1, SeedStream::new(21, 0), 8_000).unwrap();
        let p2: Vec<PathSample> = cholesky_sample(&k, &g2, SeedStream::new(22, 0), 8_000)
            .unwrap()
            .iter()
            .map(|p| p.scaled(a.powf(-hurst)))
            .collect();
        for (i, j) in [(8, 8), (4, 8), (1, 2)] {
            let (c1, s1) = empirical_cov(&p1, i, j);
            let (c2, s2) = empirical_cov(&p2, i, j);
            assert!((c1 - c2).abs() < 5.0 * (s1 * s1 + s2 * s2).sqrt());
        }
    }

    #[test]
    fn decomposition_check_guards_grids() {
        let g1 = TimeGrid::dyadic(8).unwrap();
        let g2 = TimeGrid::dyadic(16).unwrap();
        let v = sample_linear_se_one(&g1);
        let t = sample_t_process(&g2, 0.3, SeedStream::new(1, 0), 1).unwrap();
        assert!(decompose_check(&v, &t, 0.3).is_err());
        let t1 = sample_t_process(&g1, 0.3, SeedStream::new(1, 0).lane(1), 1).unwrap();
        let d = decompose_check(&v, &t1, 0.3).unwrap();
        assert!(d.max_abs_dev.is_finite());
    }

    fn sample_linear_se_one(g: &TimeGrid) -> Vec<PathSample> {
        sample_linear_she(g, 0.3, 1.0, SeedStream::new(1, 0), 1).unwrap()
    }
}
