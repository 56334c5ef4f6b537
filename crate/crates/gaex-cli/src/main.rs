//! Command-line front end: train runs from a TOML config, sweep ablation
//! grids, re-plot stored metrics, and print the chain's analytic
//! references.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gaex_core::charts::{episode_mean_band, write_svg_path, Series};
use gaex_core::harness::{run_ablation, run_training, AblationGrid, TrainingResult};
use gaex_core::metrics::{read_csv_path, write_csv_path, MetricsRecord};
use gaex_core::oracle;
use gaex_core::snapshot::Snapshot;
use gaex_core::{EnvSpec, RunConfig};

#[derive(Parser)]
#[command(
    name = "gaex",
    version,
    about = "Exploration-by-GAN toolkit: train, ablate, plot, and check against exact references"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured runs and write metrics, charts, and optionally
    /// final parameters.
    Train {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's run count.
        #[arg(long)]
        runs: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also store the last run's network parameters.
        #[arg(long)]
        snapshot: bool,
    },
    /// Run every variant of an ablation grid with shared seeds.
    Ablate {
        /// Base run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Grid of axes to sweep (TOML).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render SVG charts from stored metrics CSVs.
    Plot {
        /// Metrics files, as PATH or LABEL=PATH; repeatable.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print exact references (optimal return, reach probabilities,
    /// visitation) for a chain of the given size.
    Oracle {
        #[arg(long, default_value = "chain")]
        env: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            runs,
            out,
            snapshot,
        } => train(&config, seed, runs, &out, snapshot),
        Command::Ablate { config, grid, out } => ablate(&config, &grid, &out),
        Command::Plot { inputs, out } => plot(&inputs, &out),
        Command::Oracle { env, n } => oracle_cmd(&env, n),
    }
}

fn train(
    config: &Path,
    seed: Option<u64>,
    runs: Option<u64>,
    out: &Path,
    snapshot: bool,
) -> Result<()> {
    let mut cfg = RunConfig::from_path(config)
        .with_context(|| format!("loading config {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    fs::create_dir_all(out)?;

    let mut all = Vec::new();
    for r in 0..cfg.runs {
        let run_seed = cfg.seed + r;
        let result = run_training(&cfg, r, run_seed)?;
        println!("{}", run_summary(&cfg, r, run_seed, &result.records));
        if snapshot && r + 1 == cfg.runs {
            let path = out.join("params.bin");
            save_snapshot(&cfg, &result, &path)?;
            println!("wrote {}", path.display());
        }
        all.extend(result.records);
    }

    let csv = out.join("metrics.csv");
    write_csv_path(&csv, &all)?;
    println!("wrote {}", csv.display());
    write_standard_charts(out, &[("all runs".to_string(), all)])?;
    Ok(())
}

fn ablate(config: &Path, grid_path: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::from_path(config)
        .with_context(|| format!("loading config {}", config.display()))?;
    let grid = AblationGrid::from_path(grid_path)
        .with_context(|| format!("loading grid {}", grid_path.display()))?;
    fs::create_dir_all(out)?;

    let labeled = run_ablation(&cfg, &grid)?;
    for (label, records) in &labeled {
        let csv = out.join(format!("metrics_{}.csv", sanitize(label)));
        write_csv_path(&csv, records)?;
        let tail = final_window_mean(records, 100);
        println!(
            "{label}: {} records, final-100 mean return {:.3}, best progress {}",
            records.len(),
            tail,
            records.iter().map(|r| r.max_state).max().unwrap_or(0)
        );
        println!("wrote {}", csv.display());
    }
    write_standard_charts(out, &labeled)?;
    Ok(())
}

fn plot(inputs: &[String], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut labeled = Vec::new();
    for input in inputs {
        let (label, path) = match input.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(input);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| input.clone());
                (stem, p)
            }
        };
        let records = read_csv_path(&path)
            .with_context(|| format!("reading metrics {}", path.display()))?;
        labeled.push((label, records));
    }
    write_standard_charts(out, &labeled)?;
    Ok(())
}

fn oracle_cmd(env: &str, n: usize) -> Result<()> {
    if env != "chain" {
        bail!("analytic references exist for the chain environment only");
    }
    let optimal = oracle::chain_optimal_return(n)?;
    let reach = oracle::chain_random_reach_probability(n)?;
    let straight = oracle::chain_minimal_path_probability(n)?;
    println!("chain n={n} (episode horizon {})", n + 9);
    println!("  optimal episode return:         {optimal}");
    println!("  random-walk reach probability:  {reach}");
    println!("  straight-run probability:       {straight} (= 2^-{})", n - 1);
    let gamma = 0.99;
    let policy = vec![[0.5, 0.5]; n];
    let rho = oracle::visitation_distribution(&policy, n, gamma)?;
    println!("  uniform-policy visitation (gamma {gamma}):");
    for (i, w) in rho.iter().enumerate() {
        if n > 12 && (4..n - 4).contains(&i) {
            if i == 4 {
                println!("    ...");
            }
            continue;
        }
        println!("    s{:<4} {w:.6}", i + 1);
    }
    Ok(())
}

/// Per-run console line: budget, terminal performance, best progress.
fn run_summary(cfg: &RunConfig, run: u64, seed: u64, records: &[MetricsRecord]) -> String {
    let tail = final_window_mean(records, 100);
    let best = records.iter().map(|r| r.max_state).max().unwrap_or(0);
    let target = match cfg.env {
        EnvSpec::Chain { n } => format!("/{n}"),
        EnvSpec::PixelGrid => String::new(),
    };
    format!(
        "run {run} (seed {seed}): {} episodes, final-100 mean return {tail:.3}, best progress {best}{target}",
        records.len()
    )
}

fn final_window_mean(records: &[MetricsRecord], window: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(window)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(|r| r.ext_return).sum::<f64>() / tail.len() as f64
}

fn save_snapshot(cfg: &RunConfig, result: &TrainingResult, path: &Path) -> Result<()> {
    let mut nets = vec![
        ("online", result.learner.online()),
        ("target", result.learner.target()),
    ];
    if let Some(g) = &result.gan {
        nets.push(("generator", g.generator()));
        nets.push(("discriminator", g.discriminator()));
    }
    Snapshot::capture(cfg, &nets)?.save(path)?;
    Ok(())
}

/// One chart per metric, one mean±spread series per labeled record set.
/// Charts whose metric never occurs are skipped.
fn write_standard_charts(out: &Path, labeled: &[(String, Vec<MetricsRecord>)]) -> Result<()> {
    let metrics: Vec<(&str, fn(&MetricsRecord) -> Option<f64>)> = vec![
        ("ext_return", |r| Some(r.ext_return)),
        ("int_return", |r| Some(r.int_return)),
        ("max_state", |r| Some(r.max_state as f64)),
        ("td_loss", |r| r.td_loss),
        ("d_real", |r| r.d_real),
        ("d_fake", |r| r.d_fake),
        ("d_loss", |r| r.d_loss),
        ("g_loss", |r| r.g_loss),
    ];
    for (name, value) in metrics {
        let mut series = Vec::new();
        for (label, records) in labeled {
            let (points, band) = episode_mean_band(records, value);
            if !points.is_empty() {
                series.push(Series {
                    label: label.clone(),
                    points,
                    band,
                });
            }
        }
        if series.is_empty() {
            continue;
        }
        let path = out.join(format!("{name}.svg"));
        write_svg_path(&path, name, "episode", name, &series)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Keep ablation labels filesystem-friendly.
fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}
