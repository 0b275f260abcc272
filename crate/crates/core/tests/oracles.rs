//! Cross-module checks: closed forms against independent quadrature, the
//! exact sampler against the statistics it should reproduce, and
//! scheduling independence of the solver.

use roughshe::constants::{cov_linear_she, kappa_sq, spectral_constant};
use roughshe::estimate::estimate_h;
use roughshe::io::{paths_matrix, read_container, write_container};
use roughshe::quad::{integrate, QuadratureSpec};
use roughshe::sampler::{decompose_check, sample_linear_she, sample_t_process};
use roughshe::solver::{solve_ensemble, SolverConfig};
use roughshe::stats::{ensemble_quadratic_variation, exact_scaling_exponent, scaling_exponent};
use roughshe::{InitialCondition, ModelParams, SeedStream, SigmaSpec, TimeGrid};

/// `c₁,₁ ∫_ℝ |ξ|^{1−2H} ∫₀^{s∧t} e^{−θξ²(s−r)} e^{−θξ²(t−r)} dr dξ`, both
/// integrals numeric, with the large-ξ tail in closed form.
fn mild_covariance(s: f64, t: f64, h: f64, theta: f64) -> f64 {
    let q = QuadratureSpec::new(1e-9, 5_000_000).unwrap();
    let inner = QuadratureSpec::new(1e-10, 5_000_000).unwrap();
    let m = s.min(t);
    let f = |xi: f64| {
        let l = theta * xi * xi;
        let g = |r: f64| (-l * (s - r)).exp() * (-l * (t - r)).exp();
        // The r-integrand concentrates near r = m once l is large.
        let split = (m - 30.0 / l).max(0.0);
        let body = integrate(g, 0.0, split, &inner).unwrap().value
            + integrate(g, split, m, &inner).unwrap().value;
        xi.powf(1.0 - 2.0 * h) * body
    };
    let far = 200.0;
    let mut total = 0.0;
    let pts = [0.0, 0.5, 2.0, 8.0, 32.0, far];
    for w in pts.windows(2) {
        let r = integrate(&f, w[0], w[1], &q).unwrap();
        assert!(r.converged);
        total += r.value;
    }
    // Beyond `far`, only the diagonal s = t survives: ∫ ξ^{−1−2H}/(2θ) dξ.
    if s == t {
        total += far.powf(-2.0 * h) / (2.0 * h) / (2.0 * theta);
    }
    2.0 * spectral_constant(h).unwrap() * total
}

#[test]
fn linear_covariance_matches_double_quadrature() {
    for (s, t, h, theta) in [
        (1.0, 1.0, 0.3, 1.0),
        (1.0, 2.0, 0.3, 1.0),
        (0.5, 1.5, 0.4, 2.0),
        (2.0, 0.7, 0.27, 0.5),
    ] {
        let closed = cov_linear_she(s, t, h, theta).unwrap();
        let quad = mild_covariance(s, t, h, theta);
        assert!(
            (quad / closed - 1.0).abs() < 1e-6,
            "({s},{t},{h},{theta}): {quad} vs {closed}"
        );
    }
    assert!((cov_linear_she(1.0, 2.0, 0.3, 1.0).unwrap() - 0.0971671602506314).abs() < 1e-13);
}

#[test]
fn exact_paths_reproduce_kappa_sq() {
    let h = 0.3;
    let paths = sample_linear_she(
        &TimeGrid::dyadic(256).unwrap(),
        h,
        1.0,
        SeedStream::new(11, 0),
        300,
    )
    .unwrap();
    let r = ensemble_quadratic_variation(&paths, h).unwrap();
    let s = r.mc_summary.unwrap();
    assert!(
        (s.mean - kappa_sq(h).unwrap()).abs() < 4.0 * s.stderr,
        "{} ± {}",
        s.mean,
        s.stderr
    );
}

#[test]
fn brownian_case() {
    let h = 0.5;
    let paths = sample_linear_she(
        &TimeGrid::dyadic(1024).unwrap(),
        h,
        1.0,
        SeedStream::new(5, 0),
        100,
    )
    .unwrap();
    let mean_h = paths
        .iter()
        .map(|p| estimate_h(p, 512).unwrap())
        .sum::<f64>()
        / paths.len() as f64;
    assert!((mean_h - 0.5).abs() < 0.03, "{mean_h}");
    let eps: Vec<f64> = [4.0, 8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|k| k / 2048.0)
        .collect();
    let fit = exact_scaling_exponent(h, 1.0, 1.0, &eps).unwrap();
    assert!((fit.slope - 0.5).abs() < 0.02, "{}", fit.slope);
}

#[test]
fn exact_mc_slope_is_h() {
    let h = 0.3;
    let grid = TimeGrid::new(0.0, 512 + 64 + 1, 1.0 / 512.0).unwrap();
    let paths = sample_linear_she(&grid, h, 1.0, SeedStream::new(3, 0), 200).unwrap();
    let fit = scaling_exponent(&paths, 512, &[4, 8, 16, 32, 64]).unwrap();
    assert!((fit.slope - h).abs() < 0.1, "{}", fit.slope);
}

#[test]
fn correction_completes_fbm() {
    let h = 0.3;
    let grid = TimeGrid::new(0.25, 8, 0.25).unwrap();
    let seed = SeedStream::new(2, 0);
    let v = sample_linear_she(&grid, h, 1.0, seed, 3000).unwrap();
    let t = sample_t_process(&grid, h, seed.lane(1), 3000).unwrap();
    let d = decompose_check(&v, &t, h).unwrap();
    assert!(d.max_z < 5.0, "{d:?}");
}

#[test]
fn ensemble_container_round_trip() {
    let paths = sample_linear_she(
        &TimeGrid::dyadic(64).unwrap(),
        0.3,
        1.0,
        SeedStream::new(1, 0),
        7,
    )
    .unwrap();
    let m = paths_matrix(&paths).unwrap();
    let mut buf = Vec::new();
    write_container(&mut buf, &m).unwrap();
    let back = read_container(buf.as_slice()).unwrap();
    assert_eq!((back.rows, back.cols), (7, 65));
    for (a, b) in back.data.iter().zip(&m.data) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.row(3), paths[3].values.as_slice());
}

#[test]
fn solver_ensemble_ignores_thread_count() {
    let params = ModelParams::new(
        0.3,
        1.0,
        SigmaSpec::Linear(1.0),
        InitialCondition::Cosine {
            mean: 1.0,
            amplitude: 0.5,
            mode: 1,
        },
    )
    .unwrap();
    let cfg = SolverConfig::new(params, 8.0, 128, 1.0 / 64.0, 1.0)
        .unwrap()
        .with_probes(vec![0.0, 2.0, 4.5])
        .with_seed(SeedStream::new(4, 0));
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| solve_ensemble(&cfg, 6))
            .into_iter()
            .map(|r| {
                r.unwrap()
                    .probe_paths
                    .into_iter()
                    .flat_map(|p| p.values)
                    .map(f64::to_bits)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(3));
}
