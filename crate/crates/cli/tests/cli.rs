use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use roughshe_cli::{run, Experiment, ExperimentConfig, Format, Source};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roughshe"))
}

/// Every file below `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn manifest_without_workers(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("workers");
    v
}

fn small_qvar() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Experiment::Qvar);
    c.numeric.n = Some(128);
    c.numeric.n_list = Some(vec![32, 64, 128]);
    c.mc.n_paths = Some(40);
    c
}

#[test]
fn verify_constants_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-constants", "--H", "0.3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let c: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("constants.json")).unwrap()).unwrap();
    assert!((c["kappa_sq"].as_f64().unwrap() - 0.4977963921079173).abs() < 1e-14);
    for key in ["ratio", "decomposition", "diagonal"] {
        assert!(c["residuals"][key].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "experiment = \"qvar\"\n[model]\nH = 0.9\ntheta = 1.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["qvar", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    fs::write(&cfg, "experiment = \"qvar\"\nnot toml at all [").unwrap();
    let out = bin()
        .args(["qvar", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    let out = bin()
        .args(["qvar", "--paths", "0", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["lil", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn config_file_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.toml");
    fs::write(&cfg, "experiment = \"qvar\"\n").unwrap();
    let out = bin()
        .args(["lil", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qvar_summary_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_qvar();
    c.output.dir = Some(dir.path().to_path_buf());
    let r = run(c).unwrap();
    let s = &r.summary;
    assert_eq!((s.n_paths, s.count), (40, 40));
    assert!(s.aborted.is_empty());
    assert_eq!(s.stats[0].stat, "V_N");
    assert_eq!(s.stats[0].count, 40);
    assert_eq!(s.exit_code, if s.pass { 0 } else { 1 });
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("stat,N_or_eps,value,target,rel_error,stderr\n"));
    let lines = fs::read_to_string(dir.path().join("qvar_paths.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 40);
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(listed.contains(&"summary.json") && listed.contains(&"summary.csv"));
    assert_eq!(m["config"]["mc"]["root_seed"], 1);
}

#[test]
fn json_format_writes_jsonl_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_qvar();
    c.output.dir = Some(dir.path().to_path_buf());
    c.output.format = Format::Json;
    run(c).unwrap();
    assert!(dir.path().join("summary.jsonl").exists());
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn worker_count_does_not_change_artifacts() {
    let base = tempfile::tempdir().unwrap();
    let mut snaps = Vec::new();
    for workers in [1, 4] {
        let mut c = ExperimentConfig::new(Experiment::Sample);
        c.numeric.n = Some(64);
        c.mc.n_paths = Some(9);
        c.mc.workers = workers;
        c.output.dir = Some(base.path().join(format!("w{workers}")));
        run(c).unwrap();
        snaps.push(snapshot(&base.path().join(format!("w{workers}"))));
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a.contains_key("paths/path_00008.csv"));
    for (k, v) in a {
        if k == "manifest.json" {
            assert_eq!(manifest_without_workers(v), manifest_without_workers(&b[k]));
        } else {
            assert_eq!(v, &b[k], "{k} differs");
        }
    }
}

#[test]
fn manifest_regenerates_run() {
    let base = tempfile::tempdir().unwrap();
    let first = base.path().join("first");
    let out = bin()
        .args([
            "estimate", "--N", "256", "--paths", "12", "--seed", "9", "--out",
        ])
        .arg(&first)
        .output()
        .unwrap();
    assert!(out.status.code().unwrap() <= 1);
    let again = base.path().join("again");
    let out = bin()
        .args(["estimate", "--config"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert!(
        out.status.code().unwrap() <= 1,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(snapshot(&first), snapshot(&again));
}

#[test]
fn blow_ups_are_itemized_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(Experiment::Solve);
    c.model.sigma = Some("linear:2000".parse().unwrap());
    c.numeric.length = Some(8.0);
    c.numeric.n_modes = Some(128);
    c.numeric.dt = Some(1.0 / 64.0);
    c.numeric.t_end = Some(1.0);
    c.numeric.n_probes = Some(2);
    c.mc.n_paths = Some(4);
    c.output.dir = Some(dir.path().to_path_buf());
    let r = run(c).unwrap();
    let s = &r.summary;
    assert_eq!(s.exit_code, 3);
    assert_eq!(s.count, s.n_paths - s.aborted.len());
    assert!(!s.aborted.is_empty());
    assert!(s.aborted[0].reason.contains("blew up"));
}

#[test]
fn exact_only_experiments_reject_solver_source() {
    let mut c = ExperimentConfig::new(Experiment::Estimate);
    c.numeric.source = Some(Source::Solver);
    let dir = tempfile::tempdir().unwrap();
    c.output.dir = Some(dir.path().join("x"));
    let e = run(c).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(!dir.path().join("x").exists());
}

#[test]
fn env_sets_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-constants"])
        .env(roughshe_cli::config::OUT_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("verify-constants/manifest.json").exists());
}
