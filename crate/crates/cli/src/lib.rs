/*
Copyright 2026 The linksdf Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Command-line front end for linksdf: link-field precomputation, model
//! training, benchmarks and point-cloud replay.

pub mod bench;
pub mod scenario;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use linksdf::format::{cloud_sequence, write_distance_csv, write_link_sdf, write_model};
use linksdf::neural::{evaluate_approximator, train_approximator_with_report, TrainingConfig};
use linksdf::precompute::build_robot_link_sdfs;
use linksdf::{build_robot_sdfs, distances_along_trajectory, CanonicalPoints, Error, ExactProvider, Exec};

use crate::scenario::{RobotArgs, ScenarioArgs};

/// Bad command-line input detected by the front end itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_VALIDATION;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "linksdf", version, about = "Robot-obstacle distances from precomputed link fields")]
pub struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and cache one distance field per collision link.
    Precompute(PrecomputeArgs),
    /// Time the field pipeline against the sphere baseline.
    Bench(BenchArgs),
    /// Replay a point-cloud sequence against a trajectory.
    Replay(ReplayArgs),
    /// Train a rotation approximator for one window size.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing cache files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Repetitions per phase (queries use at least 20).
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// CSV report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Distance CSV: one row per frame.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional `timestamp_ms,min_distance` series.
    #[arg(long)]
    pub min_out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Window width in voxels per axis (even).
    #[arg(long, default_value_t = 24)]
    pub window: usize,
    /// Keep every window cell instead of the trimming sphere.
    #[arg(long)]
    pub no_mask: bool,
    #[arg(long, default_value_t = linksdf::neural::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop once the validation max error reaches this value.
    #[arg(long, default_value_t = 0.0008)]
    pub stop_max_error: f64,
    /// Max error the final model must meet on the evaluation set.
    #[arg(long, default_value_t = 0.0013)]
    pub accept_max_error: f64,
    /// Rotations in the final evaluation.
    #[arg(long, default_value_t = 100_000)]
    pub eval_samples: usize,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn guard_output(path: &Path, force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        return Err(Error::AlreadyExists { path: path.to_path_buf() }.into());
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    ensure_parent(path)?;
    let f = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(BufWriter::new(f))
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Precompute(a) => precompute(&a, exec, stdout),
        Command::Bench(a) => bench(&a, exec, stdout),
        Command::Replay(a) => replay(&a, exec, stdout),
        Command::Train(a) => train(&a, exec, stdout),
    }
}

/// Cache file name for a link.
pub fn cache_file_name(link_id: u32) -> String {
    format!("link_{link_id}.lsdf")
}

fn precompute(a: &PrecomputeArgs, exec: Exec, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = a.robot.load_robot()?;
    let ids: Vec<u32> = model.collision_links().map(|l| l.id).collect();
    for id in &ids {
        guard_output(&a.out.join(cache_file_name(*id)), a.force)?;
    }
    let sdfs = build_robot_link_sdfs(&model, a.robot.link_extent, a.robot.link_res, exec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    for sdf in &sdfs {
        let path = a.out.join(cache_file_name(sdf.link_id()));
        write_link_sdf(&path, sdf)?;
        writeln!(out, "{} {:?} cells -> {}", sdf.link_id(), sdf.dims(), path.display())?;
    }
    Ok(())
}

fn bench(a: &BenchArgs, exec: Exec, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Some(p) = &a.out {
        guard_output(p, a.force)?;
    }
    let report = bench::run_bench(&a.scenario, a.reps, exec)?;
    write!(out, "{}", report.to_text())?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        w.write_all(report.to_csv().as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn replay(a: &ReplayArgs, exec: Exec, out: &mut dyn Write) -> anyhow::Result<()> {
    let manifest = a
        .scenario
        .clouds
        .as_ref()
        .ok_or_else(|| UsageError("replay needs --clouds".into()))?;
    guard_output(&a.out, a.force)?;
    if let Some(p) = &a.min_out {
        guard_output(p, a.force)?;
    }
    let sc = a.scenario.build(exec)?;
    let batch = build_robot_sdfs(&sc.sdfs, &sc.poses, &sc.grid, &sc.points, sc.provider.as_ref(), exec)?;
    let rows = distances_along_trajectory(&batch, cloud_sequence(manifest)?, exec)?;
    let mut w = create(&a.out)?;
    write_distance_csv(&mut w, batch.configs(), &rows).context("writing distances")?;
    w.flush()?;
    let mins: Vec<(u64, f32)> = rows
        .iter()
        .map(|(t, d)| (*t, d.iter().copied().fold(batch.d_far(), f32::min)))
        .collect();
    if let Some(p) = &a.min_out {
        let mut w = create(p)?;
        writeln!(w, "timestamp_ms,min_distance")?;
        for (t, d) in &mins {
            writeln!(w, "{t},{d}")?;
        }
        w.flush()?;
    }
    let overall = mins.iter().map(|m| m.1).fold(batch.d_far(), f32::min);
    writeln!(
        out,
        "{} frames, {} configurations, minimum distance {overall} m",
        rows.len(),
        batch.configs()
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub window: usize,
    pub points: usize,
    pub hidden: usize,
    pub steps: usize,
    pub validation_max_abs_error: f64,
    pub eval_samples: usize,
    pub eval_max_abs_error: f64,
    pub eval_mean_abs_error: f64,
    pub exact_max_abs_error: f64,
    pub accepted: bool,
}

fn train(a: &TrainArgs, exec: Exec, out: &mut dyn Write) -> anyhow::Result<()> {
    if a.window == 0 || !a.window.is_multiple_of(2) {
        return Err(UsageError(format!("--window must be a positive even number, got {}", a.window)).into());
    }
    guard_output(&a.out, a.force)?;
    let points = CanonicalPoints::new([a.window; 3], !a.no_mask);
    let cfg = TrainingConfig {
        learning_rate: a.lr,
        steps: a.steps,
        batch_size: a.batch,
        hidden: a.hidden,
        seed: a.seed,
        stop_max_error: a.stop_max_error,
        accept_max_error: a.accept_max_error,
        ..TrainingConfig::default()
    };
    let (model, report) = train_approximator_with_report(&points, &cfg, exec)?;
    ensure_parent(&a.out)?;
    write_model(&a.out, &model)?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(4);
    let eval = evaluate_approximator(&model, &points, a.eval_samples, &mut rng, exec)?;
    let exact = evaluate_approximator(&ExactProvider::new(&points), &points, 100, &mut rng, exec)?;
    let summary = TrainSummary {
        window: a.window,
        points: points.len(),
        hidden: a.hidden,
        steps: report.steps,
        validation_max_abs_error: report.final_error.max_abs_error,
        eval_samples: a.eval_samples,
        eval_max_abs_error: eval.max_abs_error,
        eval_mean_abs_error: eval.mean_abs_error,
        exact_max_abs_error: exact.max_abs_error,
        accepted: eval.max_abs_error <= a.accept_max_error,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    if !summary.accepted {
        return Err(Error::NotConverged {
            achieved: eval.max_abs_error,
            target: a.accept_max_error,
        }
        .into());
    }
    Ok(())
}
