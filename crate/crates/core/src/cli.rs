//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
//! failures such as unwritable output directories.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{EstimatorKind, EstimatorSpec};
use crate::analysis::{emit_report, eta_curve};
use crate::error::Error;
use crate::maze::{self, Maze, MoveSequence};
use crate::trainer::{train_run, MetricsTimeline, StageEstimator, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "passk",
    version,
    about = "Pass@k advantage estimators and tabular RL experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate random perfect mazes.
    MazeGen {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for maze files and a manifest; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a move string against a maze file.
    MazeVerify {
        #[arg(long)]
        maze: PathBuf,
        #[arg(long)]
        moves: String,
    },
    /// Train one configuration.
    Train {
        /// Training config JSON, or a manifest written by a previous run.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Train every cell of an estimator x k x learning-rate x seed grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "pass1,passk_analytical")]
        estimators: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        ks: Vec<usize>,
        /// Multipliers applied to both learning rates of the config.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        lr_scales: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Per-accuracy advantages and their absolute sum for a closed-form estimator.
    Eta {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "passk_analytical")]
        estimator: String,
        #[arg(long)]
        zero_easy: Option<f64>,
        /// Directory for the CSV and a manifest; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect timeline CSVs and eta curves into a report directory.
    Report {
        #[arg(long = "timeline")]
        timelines: Vec<PathBuf>,
        /// Curves as `N:K:ESTIMATOR`.
        #[arg(long = "eta")]
        etas: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(flag: &str, err: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{flag}: {err}"),
    }
}

fn runtime(err: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: err.to_string(),
    }
}

/// Errors caused by bad input are usage errors; everything else is runtime.
fn classify(flag: &str, err: Error) -> Failure {
    match err {
        Error::Io { .. } | Error::Csv(_) => runtime(err),
        other => usage(flag, other),
    }
}

/// Written next to every command's output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub git_describe: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: git_describe(),
            seed,
            config,
            outputs,
        }
    }

    fn write(&self, dir: &Path) -> Result<(), Failure> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(runtime)?;
        fs::write(&path, text).map_err(|e| runtime(Error::io(path, e)))
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::MazeGen {
            size,
            count,
            seed,
            out,
        } => maze_gen(size, count, seed, out),
        Command::MazeVerify { maze, moves } => maze_verify(&maze, &moves),
        Command::Train { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.validate().map_err(|e| usage("--seed", e))?;
            }
            train_into(&cfg, &out)?;
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            estimators,
            ks,
            lr_scales,
            seeds,
            jobs,
        } => {
            let base = load_config(&config)?;
            let grid = SweepGrid::new(&estimators, &ks, &lr_scales, &seeds, jobs)?;
            sweep(&base, &grid, &out)
        }
        Command::Eta {
            n,
            k,
            estimator,
            zero_easy,
            out,
        } => eta(n, k, &estimator, zero_easy, out),
        Command::Report {
            timelines,
            etas,
            out,
        } => report(&timelines, &etas, &out),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(Error::io(dir, e)))
}

fn write_text(path: &Path, text: &[u8]) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| runtime(Error::io(path, e)))
}

fn maze_gen(size: usize, count: usize, seed: u64, out: Option<PathBuf>) -> Result<(), Failure> {
    if count == 0 {
        return Err(usage("--count", "must be at least 1"));
    }
    let mazes = (0..count as u64)
        .map(|i| maze::generate(size, seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage("--size", e))?;
    let unique = maze::dedup(mazes);
    eprintln!("generated {count} mazes, {} unique", unique.len());
    match out {
        None => {
            let texts: Vec<String> = unique.iter().map(Maze::serialize).collect();
            println!("{}", texts.join("\n\n"));
        }
        Some(dir) => {
            create_dir(&dir)?;
            let mut outputs = Vec::new();
            for (i, m) in unique.iter().enumerate() {
                let name = format!("maze_{i:05}.txt");
                write_text(&dir.join(&name), format!("{}\n", m.serialize()).as_bytes())?;
                outputs.push(name);
            }
            let config = serde_json::json!({ "size": size, "count": count, "seed": seed });
            RunManifest::new("maze-gen", Some(seed), config, outputs).write(&dir)?;
        }
    }
    Ok(())
}

fn maze_verify(path: &Path, moves: &str) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| runtime(Error::io(path, e)))?;
    let maze = Maze::parse(&text).map_err(|e| usage("--maze", e))?;
    let seq: MoveSequence = moves.trim().parse().map_err(|e| usage("--moves", e))?;
    let ok = maze::verify(&maze, &seq);
    println!("{}", if ok { "pass" } else { "fail" });
    Ok(())
}

/// Reads a config file, or the `config` field of a manifest.
fn load_config(path: &Path) -> Result<TrainConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| runtime(Error::io(path, e)))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage("--config", e))?;
    let value = match value.get("command").and(value.get("config")) {
        Some(inner) => inner.clone(),
        None => value,
    };
    let config: TrainConfig = serde_json::from_value(value).map_err(|e| usage("--config", e))?;
    config.validate().map_err(|e| usage("--config", e))?;
    Ok(config)
}

fn train_into(config: &TrainConfig, out: &Path) -> Result<MetricsTimeline, Failure> {
    create_dir(out)?;
    let run = train_run(config).map_err(|e| classify("--config", e))?;
    let mut csv = Vec::new();
    run.timeline.write_csv(&mut csv).map_err(runtime)?;
    write_text(&out.join("timeline.csv"), &csv)?;
    write_text(&out.join("policy.txt"), run.checkpoint.as_bytes())?;
    let value = serde_json::to_value(config).map_err(runtime)?;
    RunManifest::new(
        "train",
        Some(config.seed),
        value,
        vec!["timeline.csv".into(), "policy.txt".into()],
    )
    .write(out)?;
    Ok(run.timeline)
}

#[derive(Debug, Clone, Serialize)]
struct SweepGrid {
    estimators: Vec<EstimatorKind>,
    ks: Vec<usize>,
    lr_scales: Vec<f64>,
    seeds: Vec<u64>,
    jobs: usize,
}

#[derive(Debug, Clone, Serialize)]
struct SweepCell {
    name: String,
    estimator: EstimatorKind,
    k: usize,
    lr_scale: f64,
    seed: u64,
}

impl SweepGrid {
    fn new(
        estimators: &[String],
        ks: &[usize],
        lr_scales: &[f64],
        seeds: &[u64],
        jobs: usize,
    ) -> Result<Self, Failure> {
        let estimators = estimators
            .iter()
            .map(|s| s.parse::<EstimatorKind>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage("--estimators", e))?;
        if estimators.is_empty() {
            return Err(usage("--estimators", "need at least one estimator"));
        }
        if ks.is_empty() || ks.contains(&0) {
            return Err(usage("--ks", "need positive values"));
        }
        if lr_scales.is_empty() || lr_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(usage("--lr-scales", "need positive values"));
        }
        if seeds.is_empty() {
            return Err(usage("--seeds", "need at least one seed"));
        }
        if jobs == 0 {
            return Err(usage("--jobs", "must be at least 1"));
        }
        Ok(Self {
            estimators,
            ks: ks.to_vec(),
            lr_scales: lr_scales.to_vec(),
            seeds: seeds.to_vec(),
            jobs,
        })
    }

    fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &estimator in &self.estimators {
            let ks: Vec<usize> = if estimator == EstimatorKind::Pass1 {
                vec![1]
            } else {
                self.ks.clone()
            };
            for &k in &ks {
                for &lr_scale in &self.lr_scales {
                    for &seed in &self.seeds {
                        cells.push(SweepCell {
                            name: format!("{estimator}_k{k}_lr{lr_scale}_s{seed}"),
                            estimator,
                            k,
                            lr_scale,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }
}

impl SweepCell {
    fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.seed = self.seed;
        c.learning_rate *= self.lr_scale;
        c.sharpness_learning_rate *= self.lr_scale;
        for stage in &mut c.stages {
            match &mut stage.estimator {
                StageEstimator::Fixed(spec) => {
                    *spec = EstimatorSpec {
                        kind: self.estimator,
                        k: self.k,
                        ..spec.clone()
                    };
                }
                StageEstimator::Adaptive { k, .. } => *k = self.k.max(2),
            }
        }
        c
    }
}

#[derive(Debug, Serialize)]
struct SweepRow<'a> {
    cell: &'a str,
    estimator: EstimatorKind,
    k: usize,
    lr_scale: f64,
    seed: u64,
    final_step: usize,
    pass1_eval: Option<f64>,
    passk_eval: Option<f64>,
    policy_entropy: Option<f64>,
}

fn sweep(base: &TrainConfig, grid: &SweepGrid, out: &Path) -> Result<(), Failure> {
    let cells = grid.cells();
    let configs: Vec<TrainConfig> = cells.iter().map(|c| c.apply(base)).collect();
    for (cell, cfg) in cells.iter().zip(&configs) {
        cfg.validate()
            .map_err(|e| usage("--ks", format!("cell {}: {e}", cell.name)))?;
    }
    create_dir(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.jobs)
        .build()
        .map_err(runtime)?;
    let timelines: Vec<MetricsTimeline> = pool.install(|| {
        cells
            .par_iter()
            .zip(&configs)
            .map(|(cell, cfg)| train_into(cfg, &out.join(&cell.name)))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for (cell, t) in cells.iter().zip(&timelines) {
        let last = t.final_evaluation();
        w.serialize(SweepRow {
            cell: &cell.name,
            estimator: cell.estimator,
            k: cell.k,
            lr_scale: cell.lr_scale,
            seed: cell.seed,
            final_step: last.map(|r| r.step).unwrap_or(0),
            pass1_eval: last.and_then(|r| r.pass1_eval),
            passk_eval: last.and_then(|r| r.passk_eval),
            policy_entropy: last.and_then(|r| r.policy_entropy),
        })
        .map_err(runtime)?;
    }
    let summary = w.into_inner().map_err(|e| runtime(e.to_string()))?;
    write_text(&out.join("summary.csv"), &summary)?;

    let config = serde_json::json!({
        "base": serde_json::to_value(base).map_err(runtime)?,
        "grid": serde_json::to_value(grid).map_err(runtime)?,
        "cells": serde_json::to_value(&cells).map_err(runtime)?,
    });
    let mut outputs: Vec<String> = cells.iter().map(|c| c.name.clone()).collect();
    outputs.push("summary.csv".into());
    RunManifest::new("sweep", None, config, outputs).write(out)
}

fn eta(
    n: usize,
    k: usize,
    estimator: &str,
    zero_easy: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let kind: EstimatorKind = estimator.parse().map_err(|e| usage("--estimator", e))?;
    let mut spec = EstimatorSpec::new(kind, k);
    if let Some(t) = zero_easy {
        spec = spec.with_zero_easy_threshold(t);
    }
    let curve = eta_curve(n, k, &spec).map_err(|e| match e {
        Error::Config { ref field, .. } if field == "zero_easy_threshold" => {
            usage("--zero-easy", e)
        }
        Error::UnsupportedSpec(_) => usage("--estimator", e),
        other => usage("--k", other),
    })?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv).map_err(runtime)?;
    match out {
        None => {
            print!("{}", String::from_utf8_lossy(&csv));
        }
        Some(dir) => {
            create_dir(&dir)?;
            let name = curve.file_name();
            write_text(&dir.join(&name), &csv)?;
            let config = serde_json::json!({
                "n": n, "k": k, "estimator": kind, "zero_easy": zero_easy,
            });
            RunManifest::new("eta", None, config, vec![name]).write(&dir)?;
        }
    }
    Ok(())
}

fn parse_eta_arg(arg: &str) -> Result<(usize, usize, EstimatorKind), Failure> {
    let parts: Vec<&str> = arg.split(':').collect();
    let bad = || usage("--eta", format!("expected N:K:ESTIMATOR, got `{arg}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = parts[0].parse().map_err(|_| bad())?;
    let k = parts[1].parse().map_err(|_| bad())?;
    let kind = parts[2].parse().map_err(|e| usage("--eta", e))?;
    Ok((n, k, kind))
}

fn timeline_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("timeline");
    if stem == "timeline" {
        if let Some(parent) = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
        {
            return parent.to_string();
        }
    }
    stem.to_string()
}

fn report(timeline_paths: &[PathBuf], etas: &[String], out: &Path) -> Result<(), Failure> {
    let mut timelines = Vec::new();
    for path in timeline_paths {
        let file = fs::File::open(path).map_err(|e| runtime(Error::io(path, e)))?;
        let t = MetricsTimeline::read_csv(timeline_label(path), 0, file)
            .map_err(|e| usage("--timeline", e))?;
        timelines.push(t);
    }
    let mut curves = Vec::new();
    for arg in etas {
        let (n, k, kind) = parse_eta_arg(arg)?;
        let spec = EstimatorSpec::new(kind, k);
        curves.push(eta_curve(n, k, &spec).map_err(|e| usage("--eta", e))?);
    }
    emit_report(&timelines, &curves, out).map_err(runtime)?;
    Ok(())
}
