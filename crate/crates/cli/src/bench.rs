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
//! Timing harness comparing the robot-field pipeline with the sphere baseline.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Context;
use nalgebra::Vector3;

use linksdf::assembly::{
    d_far_global, error_budget, query_min_distances_counted, reliable_horizon,
    sphere_baseline_distances_counted,
};
use linksdf::format::{cloud_sequence, read_model};
use linksdf::neural::TinyMlp;
use linksdf::placement::place_links_batch;
use linksdf::precompute::build_robot_link_sdfs;
use linksdf::{
    assemble_robot_sdfs, build_robot_sdfs, voxelize_pointcloud, ExactProvider, Exec,
    ObstacleVoxelSet, SphereRobotModel, TransformProvider,
};

use crate::scenario::{random_cloud, Scenario, ScenarioArgs};
use crate::UsageError;

pub const CSV_HEADER: &str = "phase,method,mean_ms,std_ms,reps,count";

/// Minimum repetitions for any phase.
pub const MIN_REPS: usize = 5;
/// Minimum repetitions for per-query timings.
pub const MIN_QUERY_REPS: usize = 20;
const WARMUP: usize = 2;

/// Spheres fitted per link for the baseline.
pub const SPHERES_PER_LINK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub phase: &'static str,
    pub method: String,
    pub samples_ms: Vec<f64>,
    /// Work units per repetition: gathers, sphere-voxel distances, or 0.
    pub count: u64,
}

impl Timing {
    pub fn mean(&self) -> f64 {
        self.samples_ms.iter().sum::<f64>() / self.samples_ms.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let n = self.samples_ms.len();
        if n < 2 {
            return 0.0;
        }
        (self.samples_ms.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub configs: usize,
    pub links: usize,
    pub occupied: usize,
    pub spheres: usize,
    pub timings: Vec<Timing>,
    pub gathers_per_query: u64,
    pub sphere_ops_per_query: u64,
    /// Largest `|field - exact|` below the reliable horizon.
    pub oracle_max_abs_delta: f64,
    /// Mean of `field - baseline` over configurations.
    pub baseline_mean_delta: f64,
    /// Configurations where the baseline exceeds the field by more than the budget.
    pub baseline_violations: usize,
    pub budget: f64,
    pub horizon: f64,
    /// Qualitative orderings checked on this run.
    pub checks: Vec<(&'static str, bool)>,
}

impl BenchReport {
    pub fn timing(&self, phase: &str, method: &str) -> Option<&Timing> {
        self.timings
            .iter()
            .find(|t| t.phase == phase && t.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for t in &self.timings {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{},{}",
                t.phase,
                t.method,
                t.mean(),
                t.std(),
                t.samples_ms.len(),
                t.count
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "scene: {} configurations, {} links, {} occupied voxels, {} spheres",
            self.configs, self.links, self.occupied, self.spheres
        )
        .unwrap();
        for t in &self.timings {
            writeln!(
                s,
                "  {:<10} {:<8} {:>12.4} ms +- {:<10.4} ({} reps{})",
                t.phase,
                t.method,
                t.mean(),
                t.std(),
                t.samples_ms.len(),
                if t.count > 0 { format!(", {} ops", t.count) } else { String::new() }
            )
            .unwrap();
        }
        if let (Some(e), Some(n)) = (self.timing("placement", "exact"), self.timing("placement", "neural")) {
            writeln!(s, "neural placement speedup over exact: {:.2}x", e.mean() / n.mean()).unwrap();
        }
        writeln!(s, "gathers per query: {}", self.gathers_per_query).unwrap();
        writeln!(s, "sphere distances per query: {}", self.sphere_ops_per_query).unwrap();
        writeln!(
            s,
            "field vs exact (below {:.4} m): max |delta| {:.4} m, budget {:.4} m",
            self.horizon, self.oracle_max_abs_delta, self.budget
        )
        .unwrap();
        writeln!(
            s,
            "field - spheres: mean {:.4} m, {} configurations beyond budget",
            self.baseline_mean_delta, self.baseline_violations
        )
        .unwrap();
        for (name, ok) in &self.checks {
            writeln!(s, "{} {name}", if *ok { "ok       " } else { "VIOLATION" }).unwrap();
        }
        writeln!(
            s,
            "reference figures: 0.391 ms field query vs 5.47 ms sphere query per trajectory; under 1 ms for 500 waypoints"
        )
        .unwrap();
        s
    }
}

fn time_reps<T>(reps: usize, mut f: impl FnMut() -> T) -> (Vec<f64>, T) {
    for _ in 0..WARMUP {
        std::hint::black_box(f());
    }
    let mut samples = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let t = Instant::now();
        let out = std::hint::black_box(f());
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    (samples, last.expect("reps > 0"))
}

/// Obstacles for the bench: the first frame of `--clouds`, else a random cloud.
pub fn bench_obstacles(args: &ScenarioArgs, sc: &Scenario) -> anyhow::Result<ObstacleVoxelSet> {
    let points: Vec<Vector3<f64>> = match &args.clouds {
        Some(m) => match cloud_sequence(m)?.next() {
            Some(f) => f?.points,
            None => Vec::new(),
        },
        None => random_cloud(&sc.grid, args.obstacles, args.seed),
    };
    Ok(voxelize_pointcloud(&points, &sc.grid))
}

/// Exact distance from every configuration to the nearest occupied voxel
/// centre, by brute force over links.
pub fn oracle_distances(sc: &Scenario, obstacles: &ObstacleVoxelSet) -> Vec<f64> {
    let centers: Vec<_> = obstacles.voxels().map(|v| sc.grid.center(v)).collect();
    (0..sc.poses.configs())
        .map(|c| {
            let mut best = f64::INFINITY;
            for link in sc.model.collision_links() {
                let col = link.collision.as_ref().expect("collision link");
                let pose = sc.poses.get(c, link.id as usize);
                for v in &centers {
                    let local = pose.inverse_transform_point(&(*v).into()).coords;
                    best = best.min(col.signed_distance(&local));
                }
            }
            best
        })
        .collect()
}

pub fn run_bench(args: &ScenarioArgs, reps: usize, exec: Exec) -> anyhow::Result<BenchReport> {
    if reps < MIN_REPS {
        return Err(UsageError(format!("--reps must be at least {MIN_REPS}")).into());
    }
    let sc = args.build(exec)?;
    let obstacles = bench_obstacles(args, &sc)?;
    let spheres = SphereRobotModel::covering(&sc.model, SPHERES_PER_LINK).context("fitting spheres")?;
    let d_far = d_far_global(&sc.sdfs);
    let e_r = args.robot.link_extent;
    let r_r = args.robot.link_res;
    let mut timings = Vec::new();
    let mut push = |phase, method: &str, samples_ms, count| {
        timings.push(Timing {
            phase,
            method: method.to_string(),
            samples_ms,
            count,
        })
    };

    let (t, _) = time_reps(reps, || build_robot_link_sdfs(&sc.model, e_r, r_r, exec).unwrap());
    push("precompute", "sdf", t, 0);

    let (t, _) = time_reps(reps, || sc.model.forward_kinematics_batch_with(&sc.configs, exec).unwrap());
    push("prepare", "spheres", t, 0);

    let provider: &dyn TransformProvider = sc.provider.as_ref();
    let (t, robot) = time_reps(reps, || {
        let poses = sc.model.forward_kinematics_batch_with(&sc.configs, exec).unwrap();
        build_robot_sdfs(&sc.sdfs, &poses, &sc.grid, &sc.points, provider, exec).unwrap()
    });
    push("prepare", "sdf", t, 0);

    let exact = ExactProvider::new(&sc.points);
    let (t, fields) = time_reps(reps, || {
        place_links_batch(&sc.sdfs, &sc.poses, &sc.grid, &sc.points, &exact, exec).unwrap()
    });
    push("placement", "exact", t, 0);
    let neural: Option<TinyMlp> = match &args.model {
        Some(p) => Some(read_model(p)?),
        None => None,
    };
    if let Some(m) = neural.as_ref().filter(|m| m.num_points() == sc.points.len()) {
        let (t, _) = time_reps(reps, || {
            place_links_batch(&sc.sdfs, &sc.poses, &sc.grid, &sc.points, m, exec).unwrap()
        });
        push("placement", "neural", t, 0);
    }
    let configs = sc.poses.configs();
    let (t, _) = time_reps(reps, || {
        assemble_robot_sdfs(&fields, configs, &sc.grid, d_far, exec).unwrap()
    });
    push("assembly", "sdf", t, 0);

    let qreps = reps.max(MIN_QUERY_REPS);
    let (t, (sdf_d, qstats)) = time_reps(qreps, || query_min_distances_counted(&robot, &obstacles, exec).unwrap());
    push("query", "sdf", t, qstats.gathers);
    let (t, (sph_d, sstats)) = time_reps(qreps, || {
        sphere_baseline_distances_counted(&spheres, &sc.poses, &obstacles, d_far, exec)
    });
    push("query", "spheres", t, sstats.pose_ops);

    let budget = error_budget(args.grid_res, r_r);
    let horizon = reliable_horizon(e_r, sc.model.link_reach(), args.grid_res, r_r);
    let oracle = oracle_distances(&sc, &obstacles);
    let oracle_max_abs_delta = sdf_d
        .iter()
        .zip(&oracle)
        .map(|(&d, &o)| ((d as f64).min(horizon) - o.min(horizon)).abs())
        .fold(0.0, f64::max);
    let baseline_mean_delta = if configs == 0 {
        0.0
    } else {
        sdf_d.iter().zip(&sph_d).map(|(a, b)| (a - b) as f64).sum::<f64>() / configs as f64
    };
    let baseline_violations = sdf_d
        .iter()
        .zip(&sph_d)
        .filter(|(a, b)| **b as f64 > **a as f64 + budget)
        .count();

    let mean = |p: &str, m: &str| timings.iter().find(|t| t.phase == p && t.method == m).unwrap().mean();
    let checks = vec![
        ("sdf_prepare_exceeds_sphere_prepare", mean("prepare", "sdf") > mean("prepare", "spheres")),
        ("sdf_query_below_sphere_query", mean("query", "sdf") < mean("query", "spheres")),
        ("gathers_equal_configs_times_occupied", qstats.gathers == (configs * obstacles.len()) as u64),
        ("field_within_budget_of_exact", oracle_max_abs_delta <= budget),
        ("spheres_conservative", baseline_violations == 0),
    ];

    Ok(BenchReport {
        configs,
        links: sc.sdfs.len(),
        occupied: obstacles.len(),
        spheres: spheres.len(),
        timings,
        gathers_per_query: qstats.gathers,
        sphere_ops_per_query: sstats.pose_ops,
        oracle_max_abs_delta,
        baseline_mean_delta,
        baseline_violations,
        budget,
        horizon,
        checks,
    })
}
