use std::path::PathBuf;
use std::process::{Command, Output};

fn config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

fn sitconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sitconf")).args(args).output().unwrap()
}

fn run(sub: &str, out: &std::path::Path, extra: &[&str]) -> Output {
    let cfg = config();
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    sitconf(&args)
}

#[test]
fn help_lists_every_subcommand() {
    let out = sitconf(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "demo-infer",
        "case-study",
        "calibrate-beta",
        "run-online",
        "sample-trajectories",
    ] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let online = String::from_utf8(sitconf(&["run-online", "--help"]).stdout).unwrap();
    for flag in ["--config", "--out", "--seed", "--set-size", "--mode", "--model"] {
        assert!(online.contains(flag), "{flag} missing from run-online help");
    }
}

#[test]
fn missing_config_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = sitconf(&[
        "demo-infer",
        "--config",
        "/nonexistent/where.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/nonexistent/where.json"), "{err}");
}

#[test]
fn invalid_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("run-online", dir.path(), &["--mode", "greedy"]);
    assert!(!out.status.success());
}

#[test]
fn zero_set_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("sample-trajectories", dir.path(), &["--set-size", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("set_size"));
}

#[test]
fn demo_infer_writes_posteriors_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("demo-infer", dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "posterior_perfect.csv",
        "posterior_noisy.csv",
        "posterior_misspecified.csv",
        "metrics.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("posterior_perfect.csv")).unwrap();
    // 19 directions times 9 rationality levels, plus the header.
    assert_eq!(csv.lines().count(), 19 * 9 + 1);
}

#[test]
fn seed_and_set_size_flags_change_the_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(run("sample-trajectories", a.path(), &["--set-size", "40"])
        .status
        .success());
    assert!(
        run("sample-trajectories", b.path(), &["--set-size", "40", "--seed", "99"])
            .status
            .success()
    );
    assert!(run("sample-trajectories", c.path(), &["--set-size", "40"])
        .status
        .success());
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("features.csv")).unwrap();
    assert_eq!(read(&a), read(&c));
    assert_ne!(read(&a), read(&b));
    assert_eq!(String::from_utf8(read(&a)).unwrap().lines().count(), 41);
}

#[test]
fn run_online_reuses_a_saved_model() {
    let cal = tempfile::tempdir().unwrap();
    assert!(run("calibrate-beta", cal.path(), &[]).status.success());
    let model = cal.path().join("model.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let with = run(
        "run-online",
        a.path(),
        &["--mode", "adaptive", "--model", model.to_str().unwrap()],
    );
    assert!(with.status.success(), "{}", String::from_utf8_lossy(&with.stderr));
    assert!(!a.path().join("model.json").exists());
    assert!(run("run-online", b.path(), &["--mode", "adaptive"]).status.success());
    // Calibrating on the fly yields the same model, hence the same study.
    assert_eq!(
        std::fs::read(a.path().join("metrics.json")).unwrap(),
        std::fs::read(b.path().join("metrics.json")).unwrap()
    );
}
