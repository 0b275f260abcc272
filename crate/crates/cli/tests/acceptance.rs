//! Acceptance suite: one PASS/FAIL line per criterion. Runtime budgets are
//! part of each verdict. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use roughshe::constants::{cov_fbm, cov_linear_she, cov_t, kappa_sq, kappa_tilde, kappa_tilde_sq};
use roughshe::estimate::{estimate_h, estimate_theta};
use roughshe::quad::QuadratureSpec;
use roughshe::sampler::sample_linear_she;
use roughshe::solver::{cross_validate_linear, solve_ensemble, FieldTrajectory, SolverConfig};
use roughshe::spectral::{
    band_second_moment, cov_t_spectral, tail_bound_check, verify_green_finiteness,
    verify_kernel_scaling, SpectralBand,
};
use roughshe::stats::{
    chung_statistic, dyadic_levels, dyadic_restriction, exact_scaling_exponent, khinchin_statistic,
    quadratic_variation, qvar_target, qvar_variance_decay, scaling_exponent, McSummary,
};
use roughshe::{InitialCondition, ModelParams, PathSample, SeedStream, SigmaSpec, TimeGrid};
use roughshe_cli::{run, Experiment, ExperimentConfig};

const H: f64 = 0.3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c1_constants() -> Verdict {
    let mut rng = SeedStream::new(2024, 0).rng();
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let s: f64 = rng.random_range(0.01..5.0);
        let t: f64 = rng.random_range(0.01..5.0);
        let h: f64 = rng.random_range(0.2501..0.4999);
        let r = [
            rel(
                kappa_tilde_sq(h).unwrap() / kappa_sq(h).unwrap(),
                2f64.powf(h - 1.0),
            ),
            rel(
                cov_t(s, t, h).unwrap() + cov_linear_she(s, t, h, 1.0).unwrap(),
                kappa_sq(h).unwrap() * cov_fbm(s, t, 0.5 * h).unwrap(),
            ),
            rel(
                cov_linear_she(t, t, h, 1.0).unwrap(),
                kappa_tilde_sq(h).unwrap() * t.powf(h),
            ),
        ];
        for (w, x) in worst.iter_mut().zip(r) {
            *w = w.max(x);
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    verdict(
        max < 1e-12,
        format!(
            "max relative residual {max:.2e} (ratio {:.1e}, decomposition {:.1e}, diagonal {:.1e})",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn c2_quadrature() -> Verdict {
    let q = QuadratureSpec::new(1e-8, 20_000_000).unwrap();
    let mut worst = 0.0f64;
    for (t, h) in [
        (1.0, 0.3),
        (0.5, 0.27),
        (2.0, 0.35),
        (0.25, 0.45),
        (4.0, 0.4),
    ] {
        let ct = cov_t_spectral(t, t, h, &q).unwrap();
        let band = band_second_moment(SpectralBand::full(), t, h, &q).unwrap();
        if !(ct.converged && band.converged) {
            return verdict(
                false,
                format!("quadrature did not converge at t={t}, H={h}"),
            );
        }
        worst = worst.max(rel(ct.value, cov_t(t, t, h).unwrap()));
        worst = worst.max(rel(band.value, kappa_tilde_sq(h).unwrap() * t.powf(h)));
    }
    verdict(
        worst < 1e-6,
        format!("max relative disagreement {worst:.2e} over 5 (t, H) points"),
    )
}

fn c3_linear_qvar() -> Verdict {
    let k2 = kappa_sq(H).unwrap();
    let paths = sample_linear_she(
        &TimeGrid::dyadic(1024).unwrap(),
        H,
        1.0,
        SeedStream::new(3, 0),
        200,
    )
    .unwrap();
    let vs: Vec<f64> = paths
        .iter()
        .map(|p| quadratic_variation(p, H).unwrap().v_n)
        .collect();
    let s = McSummary::from_samples(&vs);
    let z = (s.mean - k2) / s.stderr;
    let d = qvar_variance_decay(&paths, H, &[256, 512, 1024]).unwrap();
    let ok = z.abs() <= 3.0 && (-1.4..=-0.6).contains(&d.slope) && (k2 - 0.497796).abs() < 5e-7;
    verdict(
        ok,
        format!(
            "mean V_N {:.5} vs κ² {k2:.6} ({z:+.2} stderr); decay slope {:.3} ± {:.3}",
            s.mean, d.slope, d.slope_stderr
        ),
    )
}

/// Nonlinear solver ensemble shared by criteria 4 and 6.
fn nonlinear_ensemble() -> (SolverConfig, Vec<FieldTrajectory>, usize) {
    let params = ModelParams::new(
        H,
        1.0,
        SigmaSpec::Linear(1.0),
        InitialCondition::Cosine {
            mean: 1.0,
            amplitude: 0.5,
            mode: 1,
        },
    )
    .unwrap();
    let dt = 1.0 / 2048.0;
    let mut cfg = SolverConfig::new(params, 16.0, 8192, dt, 1.0 + 64.0 * dt)
        .unwrap()
        .with_probes((0..8).map(|j| 2.0 * j as f64).collect())
        .with_seed(SeedStream::new(4, 0));
    cfg.store_field = false;
    let mut ok = Vec::new();
    let mut aborted = 0;
    for r in solve_ensemble(&cfg, 100) {
        match r {
            Ok(t) => ok.push(t),
            Err(roughshe::Error::BlowUp { .. }) => aborted += 1,
            Err(e) => panic!("solver failed: {e}"),
        }
    }
    (cfg, ok, aborted)
}

fn c4_nonlinear_qvar(trajectories: &[FieldTrajectory], aborted: usize) -> Verdict {
    let ratios: Vec<f64> = trajectories
        .iter()
        .map(|t| {
            t.probe_paths
                .iter()
                .map(|p| {
                    let r = dyadic_restriction(p, 512).unwrap();
                    quadratic_variation(&r, H).unwrap().v_n
                        / qvar_target(&r, SigmaSpec::Linear(1.0), H, 1.0).unwrap()
                })
                .sum::<f64>()
                / t.probe_paths.len() as f64
        })
        .collect();
    let s = McSummary::from_samples(&ratios);
    verdict(
        (0.85..=1.15).contains(&s.mean) && aborted <= 5,
        format!(
            "mean V_N/target {:.4} ± {:.4} over {} trajectories, {aborted} aborted",
            s.mean, s.stderr, s.count
        ),
    )
}

fn c5_cross_validation() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for theta in [1.0, 2.0] {
        let params =
            ModelParams::new(H, theta, SigmaSpec::Additive, InitialCondition::Zero).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for dt in [1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0] {
            let mut cfg = SolverConfig::new(params, 32.0, 8192, dt, 1.0)
                .unwrap()
                .with_probes((0..32).map(|j| j as f64).collect())
                .with_stride((0.25 / dt) as usize)
                .with_seed(SeedStream::new(5, 0));
            cfg.store_field = false;
            let cv = cross_validate_linear(&cfg, &[0.25, 0.5, 1.0], 200).unwrap();
            let worst = cv
                .rows
                .iter()
                .max_by(|a, b| a.rel_dev.total_cmp(&b.rel_dev))
                .unwrap();
            let se = worst.stderr / worst.target;
            ok &= cv.max_rel_dev <= 0.1;
            if let Some((d0, s0)) = prev {
                ok &= cv.max_rel_dev <= d0 + 2.0 * (s0 * s0 + se * se).sqrt();
            }
            prev = Some((cv.max_rel_dev, se));
            parts.push(format!(
                "θ={theta} dt=1/{:.0}: {:.3}",
                1.0 / dt,
                cv.max_rel_dev
            ));
        }
    }
    verdict(
        ok,
        format!("max relative variance deviation {}", parts.join(", ")),
    )
}

fn c6_scaling(trajectories: &[FieldTrajectory]) -> Verdict {
    let lags = [4usize, 8, 16, 32, 64];
    let eps: Vec<f64> = lags.iter().map(|&k| k as f64 / 2048.0).collect();
    let exact = exact_scaling_exponent(H, 1.0, 1.0, &eps).unwrap();
    let probes: Vec<PathSample> = trajectories
        .iter()
        .flat_map(|t| t.probe_paths.iter().cloned())
        .collect();
    let fit = scaling_exponent(&probes, 2048, &lags).unwrap();
    verdict(
        (exact.slope - H).abs() <= 0.02 && (fit.slope - H).abs() <= 0.1,
        format!(
            "exact-kernel slope {:.4}, solver slope {:.4} ± {:.4}",
            exact.slope, fit.slope, fit.stderr
        ),
    )
}

fn c7_lil() -> Verdict {
    let levels = dyadic_levels(8, 20);
    let grid = TimeGrid::new(0.0, (1 << 12) + 1, 2f64.powi(-20)).unwrap();
    let paths = sample_linear_she(&grid, H, 1.0, SeedStream::new(7, 0), 200).unwrap();
    let kt = kappa_tilde(H).unwrap();
    let khinchin: Vec<f64> = paths
        .iter()
        .map(|p| {
            *khinchin_statistic(p, H, 0, &levels)
                .unwrap()
                .last()
                .unwrap()
        })
        .collect();
    let chung: Vec<f64> = paths
        .iter()
        .map(|p| chung_statistic(p, H, &levels).unwrap())
        .collect();
    let inside = khinchin
        .iter()
        .filter(|&&k| k >= 0.2 * kt && k <= 3.0 * kt)
        .count() as f64
        / 200.0;
    let positive = chung.iter().all(|c| c.is_finite() && *c > 0.0);
    let (m1, m2) = (median(&chung[..100]), median(&chung[100..]));
    let drift = m1 / m2 - 1.0;
    verdict(
        inside >= 0.9 && positive && drift.abs() <= 0.3,
        format!(
            "Khinchin in envelope for {:.0}% of paths; Chung batch medians {m1:.3} / {m2:.3} ({:+.1}%)",
            100.0 * inside,
            100.0 * drift
        ),
    )
}

fn c8_tail_bounds() -> Verdict {
    let q = QuadratureSpec::new(1e-6, 20_000_000).unwrap();
    let mut failed = 0;
    let mut max_ratio = 0.0f64;
    let mut n = 0;
    for a in [0.25, 0.5] {
        for b in [2.0, 4.0, 8.0, 16.0, 32.0] {
            for t in [0.5, 1.0] {
                match tail_bound_check(a, b, t, H, &q) {
                    Ok(r) => {
                        failed += usize::from(!r.ok);
                        max_ratio = max_ratio.max(r.lhs / r.rhs);
                    }
                    Err(_) => failed += 1,
                }
                n += 1;
            }
        }
    }
    verdict(
        failed == 0 && n == 20,
        format!(
            "{}/{n} points satisfy lhs ≤ rhs; max lhs/rhs {max_ratio:.3}",
            n - failed
        ),
    )
}

fn c9_appendix() -> Verdict {
    let q = QuadratureSpec::new(1e-6, 20_000_000).unwrap();
    let mut worst = 0.0f64;
    for beta in [0.1, 0.2, 0.25] {
        worst = worst.max(
            verify_kernel_scaling(beta, &[0.25, 1.0, 4.0], &q)
                .unwrap()
                .max_deviation,
        );
    }
    let g = verify_green_finiteness(H, 0.1, &q).unwrap();
    verdict(
        worst < 1e-3 && g.stable,
        format!("max scaling deviation {worst:.1e}; Green integral {:.6} with last refinement change {:.1e}", g.value, g.last_change),
    )
}

fn c10_estimation() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for theta in [1.0, 2.0] {
        let paths = sample_linear_she(
            &TimeGrid::dyadic(4096).unwrap(),
            H,
            theta,
            SeedStream::new(10, theta as u64),
            100,
        )
        .unwrap();
        let mut trend = Vec::new();
        for n in [1024, 2048, 4096] {
            let est: Vec<f64> = paths
                .iter()
                .map(|p| {
                    estimate_theta(&dyadic_restriction(p, n).unwrap(), SigmaSpec::Additive, H)
                        .unwrap()
                })
                .collect();
            let s = McSummary::from_samples(&est);
            trend.push(((s.mean - theta).abs() / theta, s.stderr / theta));
        }
        let (e_final, _) = trend[2];
        ok &= e_final <= 0.1;
        for w in trend.windows(2) {
            ok &= w[1].0 <= w[0].0 + 2.0 * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt();
        }
        parts.push(format!(
            "θ={theta}: rel. error {:.4} / {:.4} / {:.4} at N=2^10/2^11/2^12",
            trend[0].0, trend[1].0, trend[2].0
        ));
        if theta == 1.0 {
            let hs: Vec<f64> = paths.iter().map(|p| estimate_h(p, 2048).unwrap()).collect();
            let m = McSummary::from_samples(&hs).mean;
            ok &= (m - H).abs() <= 0.03;
            parts.push(format!("mean Ĥ {m:.4}"));
        }
    }
    verdict(ok, parts.join("; "))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Small configurations of every experiment.
fn small_configs() -> Vec<ExperimentConfig> {
    let solver = |c: &mut ExperimentConfig| {
        c.numeric.source = Some(roughshe_cli::Source::Solver);
        c.numeric.length = Some(8.0);
        c.numeric.n_modes = Some(256);
        c.numeric.dt = Some(1.0 / 128.0);
        c.numeric.t_end = Some(1.5);
        c.numeric.n_probes = Some(4);
        c.mc.n_paths = Some(6);
    };
    Experiment::ALL
        .into_iter()
        .flat_map(|e| {
            let mut c = ExperimentConfig::new(e);
            c.mc.root_seed = 17;
            match e {
                Experiment::Sample => {
                    c.numeric.n = Some(128);
                    c.mc.n_paths = Some(10);
                }
                Experiment::Solve => solver(&mut c),
                Experiment::Qvar | Experiment::Pvar | Experiment::Scaling => {
                    c.numeric.n = Some(128);
                    c.numeric.n_list = Some(vec![32, 64, 128]);
                    c.mc.n_paths = Some(20);
                }
                Experiment::Lil => {
                    c.numeric.eps_min_exp = Some(4);
                    c.numeric.eps_max_exp = Some(10);
                    c.mc.n_paths = Some(20);
                }
                Experiment::Estimate => {
                    c.numeric.n = Some(256);
                    c.numeric.n_list = Some(vec![64, 128, 256]);
                    c.mc.n_paths = Some(20);
                }
                Experiment::Tailbounds => {
                    c.numeric.a_list = Some(vec![0.5]);
                    c.numeric.b_list = Some(vec![2.0, 8.0]);
                }
                Experiment::VerifyConstants => {}
            }
            let mut out = vec![c.clone()];
            if matches!(e, Experiment::Qvar | Experiment::Pvar | Experiment::Scaling) {
                let mut s = c;
                solver(&mut s);
                s.numeric.n = Some(128);
                out.push(s);
            }
            out
        })
        .collect()
}

fn c11_determinism() -> Verdict {
    let base = tempfile::tempdir().unwrap();
    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    for (i, cfg) in small_configs().into_iter().enumerate() {
        let mut snaps = Vec::new();
        for workers in [1, 4] {
            let mut c = cfg.clone();
            c.mc.workers = workers;
            let dir = base
                .path()
                .join(format!("{i}-{}-w{workers}", cfg.experiment));
            c.output.dir = Some(dir.clone());
            if let Err(e) = run(c) {
                return verdict(false, format!("{} failed: {e}", cfg.experiment));
            }
            snaps.push(snapshot(&dir));
        }
        if snaps[0].keys().ne(snaps[1].keys()) {
            mismatches.push(format!("{}: file sets differ", cfg.experiment));
            continue;
        }
        for (name, a) in &snaps[0] {
            let b = &snaps[1][name];
            let same = if name == "manifest.json" {
                let strip = |x: &[u8]| {
                    let mut v: serde_json::Value = serde_json::from_slice(x).unwrap();
                    v.as_object_mut().unwrap().remove("workers");
                    v
                };
                strip(a) == strip(b)
            } else {
                a == b
            };
            if !same {
                mismatches.push(format!("{}/{name}", cfg.experiment));
            }
            compared += 1;
        }
    }
    verdict(
        mismatches.is_empty() && compared > 0,
        if mismatches.is_empty() {
            format!(
                "{compared} artifacts byte-identical for workers 1 and 4 across all experiments"
            )
        } else {
            format!("differences in {}", mismatches.join(", "))
        },
    )
}

fn report(id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let pass = v.pass && in_time;
    let budget_note = match budget {
        Some(b) if !in_time => format!(", over the {:.0} s budget", b.as_secs_f64()),
        _ => String::new(),
    };
    println!(
        "{} criterion {id:>2} {name}: {} [{:.1} s{budget_note}]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    all &= report(1, "constant identities", Some(secs(1)), c1_constants);
    all &= report(2, "quadrature oracles", Some(secs(60)), c2_quadrature);
    all &= report(
        3,
        "linear quadratic variation",
        Some(secs(600)),
        c3_linear_qvar,
    );

    let start = Instant::now();
    let (_, trajectories, aborted) = nonlinear_ensemble();
    let shared = start.elapsed();
    all &= report(
        4,
        "nonlinear quadratic variation",
        Some(secs(3600).saturating_sub(shared)),
        || c4_nonlinear_qvar(&trajectories, aborted),
    );
    all &= report(
        5,
        "solver vs exact variance",
        Some(secs(1800)),
        c5_cross_validation,
    );
    all &= report(
        6,
        "scaling exponent",
        Some(secs(600).saturating_sub(shared)),
        || c6_scaling(&trajectories),
    );
    all &= report(7, "LIL envelopes", None, c7_lil);
    all &= report(8, "tail bounds", Some(secs(300)), c8_tail_bounds);
    all &= report(9, "appendix integrals", Some(secs(300)), c9_appendix);
    all &= report(10, "estimation", Some(secs(900)), c10_estimation);
    all &= report(11, "determinism", None, c11_determinism);
    println!(
        "(the nonlinear ensemble shared by criteria 4 and 6 took {:.1} s)",
        shared.as_secs_f64()
    );
    if !all {
        std::process::exit(1);
    }
}
