//! End-to-end tests of the `tomo` binary: artifact layout, determinism,
//! flag precedence and error reporting.

use std::path::Path;
use std::process::{Command, Output};

fn tomo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tomo"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawning tomo");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawning tomo");
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small config so every test stays fast.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        "volume_size = 32\nphantom_count = 4\npatch_size = 9\nfeat = 4\nhidden = 8\n\
         depth = 1\npe_dim = 16\nbatch_size = 4\nsteps = 3\nchunk_size = 512\n",
    )
    .unwrap();
    path
}

fn bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn simulate_writes_expected_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(tomo().args([
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "simulate",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    for name in ["phantom.mrc", "tilts_even.mrc", "tilts_odd.mrc", "angles.tlt", "report.txt"] {
        assert!(a.join(name).exists(), "missing {name}");
    }
    // same config + seed => bit-identical data artifacts
    for name in ["phantom.mrc", "tilts_even.mrc", "tilts_odd.mrc", "angles.tlt"] {
        assert_eq!(bytes(&a.join(name)), bytes(&b.join(name)), "{name} differs");
    }
    // a different seed changes the noise
    let c = dir.path().join("c");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "simulate",
        "--out",
        c.to_str().unwrap(),
    ]));
    assert_ne!(bytes(&a.join("tilts_even.mrc")), bytes(&c.join("tilts_even.mrc")));
}

#[test]
fn noise_none_gives_identical_half_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--noise",
        "none",
        "simulate",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(bytes(&out.join("tilts_even.mrc")), bytes(&out.join("tilts_odd.mrc")));
}

#[test]
fn fbp_runs_and_filter_flag_changes_the_volume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim.to_str().unwrap(),
    ]));
    let mut volumes = Vec::new();
    for (filter, name) in [("cosine-ramp", "cos.mrc"), ("ramp", "ramp.mrc")] {
        let out = dir.path().join(name);
        run_ok(tomo().args([
            "--config",
            cfg.to_str().unwrap(),
            "--filter",
            filter,
            "fbp",
            "--tilts",
            sim.join("tilts_even.mrc").to_str().unwrap(),
            "--angles",
            sim.join("angles.tlt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        volumes.push(bytes(&out));
    }
    assert_ne!(volumes[0], volumes[1], "filter window had no effect");
    assert!(dir.path().join("fbp_report.txt").exists());
}

#[test]
fn train_zero_steps_emits_initial_checkpoint_and_empty_loss_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim.to_str().unwrap(),
    ]));
    let out = dir.path().join("model");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "0",
        "train",
        "--phantom",
        sim.join("phantom.mrc").to_str().unwrap(),
        "--tilts-even",
        sim.join("tilts_even.mrc").to_str().unwrap(),
        "--tilts-odd",
        sim.join("tilts_odd.mrc").to_str().unwrap(),
        "--angles",
        sim.join("angles.tlt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(out.join("model.ckpt").exists());
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "expected header only: {csv}");
    assert!(csv.starts_with("step,loss"));
}

#[test]
fn train_loss_csv_has_one_row_per_step_and_wavelet_records_out_dim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim.to_str().unwrap(),
    ]));
    let out = dir.path().join("model");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "wavelet",
        "train",
        "--phantom",
        sim.join("phantom.mrc").to_str().unwrap(),
        "--tilts-even",
        sim.join("tilts_even.mrc").to_str().unwrap(),
        "--tilts-odd",
        sim.join("tilts_odd.mrc").to_str().unwrap(),
        "--angles",
        sim.join("angles.tlt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "3 steps configured");
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("metric.out_dim: 8"), "{report}");
}

#[test]
fn reconstruct_checks_checkpoint_mode_and_reports_eval_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim.to_str().unwrap(),
    ]));
    let model = dir.path().join("model");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "0",
        "train",
        "--phantom",
        sim.join("phantom.mrc").to_str().unwrap(),
        "--tilts-even",
        sim.join("tilts_even.mrc").to_str().unwrap(),
        "--tilts-odd",
        sim.join("tilts_odd.mrc").to_str().unwrap(),
        "--angles",
        sim.join("angles.tlt").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]));
    // pixel checkpoint + wavelet flag: typed error naming both modes
    let stderr = run_err(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "wavelet",
        "reconstruct",
        "--checkpoint",
        model.join("model.ckpt").to_str().unwrap(),
        "--tilts",
        sim.join("tilts_even.mrc").to_str().unwrap(),
        "--angles",
        sim.join("angles.tlt").to_str().unwrap(),
        "--out",
        dir.path().join("bad.mrc").to_str().unwrap(),
    ]));
    assert!(stderr.contains("Pixel") && stderr.contains("Wavelet"), "{stderr}");
    // matching mode succeeds and logs the evaluation count
    let out = dir.path().join("recon.mrc");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "reconstruct",
        "--checkpoint",
        model.join("model.ckpt").to_str().unwrap(),
        "--tilts",
        sim.join("tilts_even.mrc").to_str().unwrap(),
        "--angles",
        sim.join("angles.tlt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(out.exists());
    let report = std::fs::read_to_string(dir.path().join("reconstruct_report.txt")).unwrap();
    assert!(
        report.contains(&format!("metric.network_evals: {}", 32 * 32 * 32)),
        "{report}"
    );
}

#[test]
fn fsc_of_a_volume_with_itself_never_crosses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim.to_str().unwrap(),
    ]));
    let report = dir.path().join("fsc.txt");
    let out = run_ok(tomo().args([
        "fsc",
        "--a",
        sim.join("phantom.mrc").to_str().unwrap(),
        "--b",
        sim.join("phantom.mrc").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FSC=0.5") && stdout.contains("FSC=0.143"), "{stdout}");
    assert!(stdout.matches("not crossed").count() == 2, "{stdout}");
    assert!(report.exists());
}

#[test]
fn fsc_dimension_mismatch_names_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim32 = dir.path().join("sim32");
    run_ok(tomo().args([
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--out",
        sim32.to_str().unwrap(),
    ]));
    let cfg16 = dir.path().join("run16.cfg");
    std::fs::write(&cfg16, "volume_size = 16\nphantom_count = 2\n").unwrap();
    let sim16 = dir.path().join("sim16");
    run_ok(tomo().args([
        "--config",
        cfg16.to_str().unwrap(),
        "simulate",
        "--out",
        sim16.to_str().unwrap(),
    ]));
    let stderr = run_err(tomo().args([
        "fsc",
        "--a",
        sim32.join("phantom.mrc").to_str().unwrap(),
        "--b",
        sim16.join("phantom.mrc").to_str().unwrap(),
    ]));
    assert!(stderr.contains("32") && stderr.contains("16"), "{stderr}");
}

#[test]
fn bad_config_and_unknown_key_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "patchsize = 21\n").unwrap();
    let stderr = run_err(tomo().args([
        "--config",
        bad.to_str().unwrap(),
        "simulate",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]));
    assert!(stderr.contains("patchsize"), "{stderr}");
    // missing input file
    let stderr = run_err(tomo().args([
        "fbp",
        "--tilts",
        dir.path().join("nope.mrc").to_str().unwrap(),
        "--angles",
        dir.path().join("nope.tlt").to_str().unwrap(),
        "--out",
        dir.path().join("out.mrc").to_str().unwrap(),
    ]));
    assert!(!stderr.is_empty());
}
