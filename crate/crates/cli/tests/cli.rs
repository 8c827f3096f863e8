//! End-to-end checks of the qdistill binary: reproducible CSV, graceful
//! degradation, exit codes and the sidecar manifest.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdistill"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn rate_identity_channel_emits_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rate.cfg",
        "scenario = rate\nchannel.kind = identity\nn_list = 1\n",
    );
    let out_csv = dir.path().join("rate.csv");
    let output = run(&[
        "rate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("scenario,n,seed,rate_bits"));
    assert!(lines[1].starts_with("rate,1,0,1.00000000e0,"));
    // sidecar manifest in the same directory
    let manifest = std::fs::read_to_string(dir.path().join("rate.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 0"));
    assert!(manifest.contains("scenario = rate"));
    assert!(manifest.contains("version = "));
}

#[test]
fn keygen_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "keygen.cfg",
        "scenario = keygen\nchannel.kind = amplitude_damping\nchannel.gamma = 0.2\nn_list = 2,4\nseed = 5\n",
    );
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let output = run(&[
            "protocol",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{output:?}");
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "re-run CSV differs");
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 3); // header + two n rows
}

#[test]
fn unknown_key_is_named_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "scenario = rate\nchanel.kind = identity\n");
    let output = run(&["rate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("chanel"), "stderr: {err}");
}

#[test]
fn infeasible_row_warns_but_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "entdist.cfg",
        "scenario = entdist\nsource.kind = two_pure\nsource.overlap_e = 0.95\nrate_backoff = 0.05\nn_list = 4,12\n",
    );
    let out_csv = dir.path().join("entdist.csv");
    let output = run(&[
        "protocol",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("warning"), "stderr: {err}");
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("entdist,12,"));
    assert!(!last.ends_with(','), "error column should be filled: {last}");
}

#[test]
fn all_rows_infeasible_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "toolarge.cfg",
        "scenario = entdist\nsource.kind = two_pure\nn_list = 12\n",
    );
    let output = run(&["protocol", "--config", cfg.to_str().unwrap(), "--out",
        dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn dry_run_prints_code_sizes_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dry.cfg",
        "scenario = entdist\nsource.kind = two_pure\nsource.overlap_e = 0.95\nrate_backoff = 0.05\nn_list = 4\n",
    );
    let out_csv = dir.path().join("dry.csv");
    let output = run(&[
        "protocol",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("M = "), "stdout: {stdout}");
    assert!(stdout.contains("S = "));
    assert!(stdout.contains("L = "));
    assert!(!out_csv.exists(), "dry run must not write output");
}

#[test]
fn subcommand_and_scenario_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r.cfg", "scenario = rate\nchannel.kind = identity\n");
    let output = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn seed_override_changes_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed.cfg",
        "scenario = typical\nsource.kind = ideal\nsource.probs = 0.7,0.3\nn_list = 4\ndelta = 0.3\n",
    );
    let out_csv = dir.path().join("t.csv");
    let output = run(&[
        "typical",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert!(output.status.success(), "{output:?}");
    let manifest = std::fs::read_to_string(dir.path().join("t.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 42"));
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("typical,4,42,"));
}
