//! End-to-end checks that the binary's subcommands wire config loading,
//! training, file output, and the analytic references together.

use std::fs;
use std::path::Path;
use std::process::Command;

fn gaex() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaex"))
}

/// A chain config small enough to train inside a test.
const TINY: &str = r#"
mode = "gan_bonus"
episodes = 12
seed = 5
runs = 2

[env]
kind = "chain"
n = 5

[agent]
hidden = [16]
batch_size = 16
replay_capacity = 400
replay_start = 60
n_step = 3

[agent.epsilon]
start = 1.0
stages = [[0.05, 0.01]]

[gan]
generator_hidden = [8]
discriminator_hidden = [8]
"#;

#[test]
fn train_writes_metrics_charts_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");

    let res = gaex()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .arg("--snapshot")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout.contains("run 0 (seed 5)"), "stdout: {stdout}");
    assert!(stdout.contains("run 1 (seed 6)"), "stdout: {stdout}");

    let records = gaex_core::metrics::read_csv_path(&out.join("metrics.csv")).unwrap();
    assert_eq!(records.len(), 24);
    assert!(out.join("ext_return.svg").exists());
    assert!(out.join("max_state.svg").exists());
    assert!(out.join("params.bin").exists());

    // The stored parameters restore against the same config.
    let cfg_parsed = gaex_core::RunConfig::from_path(&cfg).unwrap();
    let snap = gaex_core::snapshot::Snapshot::load(&out.join("params.bin")).unwrap();
    assert!(snap.matches(&cfg_parsed).unwrap());
    for name in ["online", "target", "generator", "discriminator"] {
        assert!(snap.group(name).is_some(), "missing group {name}");
    }
}

#[test]
fn plot_rebuilds_charts_from_stored_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let first = dir.path().join("first");
    assert!(gaex()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap()
        .success());

    let replot = dir.path().join("replot");
    let input = format!("tiny={}", first.join("metrics.csv").display());
    let res = gaex()
        .args(["plot", "--input", &input, "--out"])
        .arg(&replot)
        .output()
        .unwrap();
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let svg = fs::read_to_string(replot.join("ext_return.svg")).unwrap();
    assert!(svg.contains("tiny"));
}

#[test]
fn ablate_writes_one_csv_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(&grid, "modes = [\"dqn\", \"gan_bonus\"]\n").unwrap();
    let out = dir.path().join("out");

    let res = gaex()
        .args(["ablate", "--config"])
        .arg(&cfg)
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("metrics_mode_dqn.csv").exists());
    assert!(out.join("metrics_mode_gan_bonus.csv").exists());
}

#[test]
fn oracle_prints_exact_chain_references() {
    let res = gaex().args(["oracle", "--n", "10"]).output().unwrap();
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("optimal episode return:         12"), "stdout: {stdout}");
    assert!(stdout.contains("0.07538604736328125"), "stdout: {stdout}");
    assert!(stdout.contains("2^-9"), "stdout: {stdout}");

    let res = gaex().args(["oracle", "--env", "pixel_grid"]).output().unwrap();
    assert!(!res.status.success());
}

#[test]
fn missing_config_fails_with_context() {
    let res = gaex()
        .args(["train", "--config", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("/nonexistent/x.toml"), "stderr: {stderr}");
}

// Keep the shipped grid/config pairing honest: the ablation axes in
// configs/ must apply cleanly to the base config they document.
#[test]
fn shipped_grids_expand_against_the_shipped_base() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let base = gaex_core::RunConfig::from_path(&configs.join("chain200.toml")).unwrap();
    for grid_name in ["chain200_modes.toml", "chain200_gan_every.toml"] {
        let grid =
            gaex_core::harness::AblationGrid::from_path(&configs.join(grid_name)).unwrap();
        let variants = gaex_core::harness::ablation_variants(&base, &grid).unwrap();
        assert!(!variants.is_empty(), "{grid_name} expanded to nothing");
    }
}
