use std::path::Path;
use std::process::Command;

use tailchain::cli_io::{
    preset_scaled, read_manifest, read_step_norms, run_experiment, run_sweep, ExperimentConfig, RunStatus, SweepFactor,
    SweepSpec, SweepValue, MANIFEST_FILE, OUTPUT_ROOT_ENV,
};
use tailchain::Error;

fn small_toy() -> ExperimentConfig {
    let mut c = preset_scaled("toy1d", 2e-3, Some(3)).unwrap();
    c.analysis.n_boot = 50;
    c
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailchain"))
}

fn write_config(dir: &Path, c: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join(format!("{}.toml", c.name));
    std::fs::write(&path, c.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn bundle_manifest_covers_every_file() {
    let root = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_toy(), root.path()).unwrap();
    assert_eq!(out.report.status, RunStatus::Ok);
    let manifest = read_manifest(&out.bundle).unwrap();
    assert_eq!(manifest.config_fingerprint, small_toy().fingerprint());
    assert!(manifest.assumed.iter().any(|a| a == "chain.burn_in"));
    let mut on_disk: Vec<String> = std::fs::read_dir(&out.bundle)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for f in &manifest.files {
        let len = std::fs::metadata(out.bundle.join(&f.path)).unwrap().len();
        assert_eq!(len, f.bytes, "{}", f.path);
        assert_eq!(f.sha256.len(), 16);
    }
    // no temporary directories are left behind
    let leftovers = std::fs::read_dir(root.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.'))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_toy();
    let ra = run_experiment(&cfg, a.path()).unwrap();
    let rb = run_experiment(&cfg, b.path()).unwrap();
    let manifest = read_manifest(&ra.bundle).unwrap();
    for f in manifest.files.iter().map(|f| f.path.as_str()).chain([MANIFEST_FILE]) {
        let x = std::fs::read(ra.bundle.join(f)).unwrap();
        let y = std::fs::read(rb.bundle.join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    // overwriting an existing bundle keeps it consistent
    let again = run_experiment(&cfg, a.path()).unwrap();
    assert_eq!(read_manifest(&again.bundle).unwrap(), manifest);
}

#[test]
fn step_norm_file_round_trips_through_fit() {
    let root = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_toy(), root.path()).unwrap();
    let file = read_step_norms(out.bundle.join("step_norms.txt")).unwrap();
    assert_eq!(file.fingerprint.as_deref(), Some(out.report.chains[0].fingerprint.as_str()));
    assert_eq!(file.values.len(), out.report.chains[0].recorded_step_norms);
    let cli = bin()
        .args(["fit", "--asymptotic"])
        .arg(out.bundle.join("step_norms.txt"))
        .output()
        .unwrap();
    assert!(cli.status.success());
    let text = String::from_utf8(cli.stdout).unwrap();
    let alpha: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("alpha_hat = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((alpha - out.report.tail_fit.unwrap().alpha_hat).abs() < 1e-9);
}

#[test]
fn zero_steps_is_a_config_error() {
    let mut c = small_toy();
    c.chain.n_steps = 0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let root = tempfile::tempdir().unwrap();
    assert!(matches!(run_experiment(&c, root.path()), Err(Error::Config(_))));
    let path = write_config(root.path(), &c);
    let status = bin().env(OUTPUT_ROOT_ENV, root.path()).arg("run").arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn single_value_sweep_equals_plain_run() {
    let root = tempfile::tempdir().unwrap();
    let base = small_toy();
    let gamma = base.optimizer.as_ref().unwrap().gamma;
    let spec = SweepSpec {
        base,
        factor: SweepFactor::StepSize,
        values: vec![SweepValue::Number(gamma)],
    };
    let table = run_sweep(&spec, root.path()).unwrap();
    assert_eq!(table.exit_code(), 0);
    let direct = run_experiment(&spec.config_for(&spec.values[0]).unwrap(), tempfile::tempdir().unwrap().path()).unwrap();
    let fit = direct.report.tail_fit.unwrap();
    assert_eq!(table.rows[0].alpha_hat, Some(fit.alpha_hat));
    assert_eq!(table.rows[0].ci95, Some(fit.ci95));
    let csv = std::fs::read_to_string(root.path().join(spec.base.bundle_dir_name()).join("sweep.csv")).unwrap();
    assert!(csv.starts_with("factor,value,status"));
    // the spec survives a TOML round trip
    assert_eq!(SweepSpec::from_toml(&spec.to_toml().unwrap()).unwrap(), spec);
}

#[test]
fn cli_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let run = |c: &ExperimentConfig| {
        let path = write_config(root.path(), c);
        bin().env(OUTPUT_ROOT_ENV, root.path()).arg("run").arg(&path).output().unwrap()
    };

    assert_eq!(run(&small_toy()).status.code(), Some(0));

    let mut diverging = small_toy();
    diverging.name = "diverging".into();
    diverging.optimizer.as_mut().unwrap().gamma = 5.0;
    assert_eq!(run(&diverging).status.code(), Some(3));
    let manifest = read_manifest(&root.path().join("diverging")).unwrap();
    assert_eq!(manifest.status, RunStatus::Diverged);

    // zero inputs freeze the chain: every step norm is 0 and the tail fit fails
    let mut frozen = small_toy();
    frozen.name = "frozen".into();
    frozen.problem.input = Some("constant:0".parse().unwrap());
    let out = run(&frozen);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let unknown = bin().args(["preset", "no_such_preset"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
    let missing = bin().args(["run", "/definitely/not/here.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn preset_emit_round_trips_and_kesten_verb() {
    let out = bin().args(["preset", "regime_kesten", "--emit", "--seed", "9"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.chain.seed, 9);
    assert!(!cfg.assumed.iter().any(|a| a == "chain.seed"));

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &cfg);
    let out = bin().arg("kesten").arg(&path).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let root = json["kesten"]["alpha"]["root"].as_f64().unwrap();
    assert!((root - 2.904).abs() < 0.1, "{root}");
    assert_eq!(json["ergodicity"]["verdict"], "ergodic");
}

#[test]
fn list_names_every_preset() {
    let out = bin().arg("list").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["toy1d", "wine_linear", "fig1_c_sigma12", "table3_batch_size"] {
        assert!(text.lines().any(|l| l == name), "{name}");
    }
}
