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
//! Acceptance gate. Prints one `[PASS]` / `[FAIL]` line per criterion and
//! fails if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linksdf::assembly::{
    error_budget, query_min_distances_counted, reliable_horizon, sphere_baseline_distances_counted,
};
use linksdf::fixtures::{six_dof_model, three_link_model};
use linksdf::neural::{evaluate_approximator, sample_rotation, train_approximator_with_report, TrainingConfig};
use linksdf::placement::{place_link, sphere_mask, window_cells};
use linksdf::precompute::build_robot_link_sdfs;
use linksdf::{
    build_robot_sdfs, compute_alignment, CanonicalPoints, EnvGrid, ExactProvider, Exec, LinkPoseBatch,
    LinkSdf, ObstacleVoxelSet, RobotModel, RobotSdfBatch, SdfSampleField, SphereRobotModel,
};

const E_E: f64 = 1.0;
const R_E: f64 = 0.04;
const R_R: f64 = 0.01;
const E_R: f64 = 0.48;
/// Obstacles are drawn among voxels within this distance of the robot base.
const WORKSPACE: f64 = 0.6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn say(line: &str) {
    // bypasses the harness capture so the gate is visible in test logs
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").unwrap();
}

struct Setup {
    model: RobotModel,
    grid: EnvGrid,
    sdfs: Vec<LinkSdf>,
    points: CanonicalPoints,
    exact: ExactProvider,
}

fn setup() -> Setup {
    let model = three_link_model();
    let grid = EnvGrid::cubic(E_E, R_E).unwrap();
    let sdfs = build_robot_link_sdfs(&model, E_R, R_R, Exec::default()).unwrap();
    let points = CanonicalPoints::masked(E_R, &grid).unwrap();
    let exact = ExactProvider::new(&points);
    Setup {
        model,
        grid,
        sdfs,
        points,
        exact,
    }
}

fn workspace_obstacles(grid: &EnvGrid, n: usize, rng: &mut ChaCha8Rng) -> ObstacleVoxelSet {
    let candidates: Vec<usize> = (0..grid.voxel_count())
        .filter(|&l| grid.center(grid.unravel(l)).norm() <= WORKSPACE)
        .collect();
    let picked = sample(rng, candidates.len(), n);
    ObstacleVoxelSet::from_voxels(grid, picked.iter().map(|i| grid.unravel(candidates[i]))).unwrap()
}

fn exact_distances(s: &Setup, poses: &LinkPoseBatch, obstacles: &ObstacleVoxelSet) -> Vec<f64> {
    let centers: Vec<_> = obstacles.voxels().map(|v| s.grid.center(v)).collect();
    (0..poses.configs())
        .map(|c| {
            let mut best = f64::INFINITY;
            for link in s.model.collision_links() {
                let col = link.collision.as_ref().unwrap();
                let pose = poses.get(c, link.id as usize);
                for v in &centers {
                    best = best.min(col.signed_distance(&pose.inverse_transform_point(&(*v).into()).coords));
                }
            }
            best
        })
        .collect()
}

fn criterion_1(s: &Setup) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let configs = s.model.random_configs(50, &mut rng);
    let poses = s.model.forward_kinematics_batch(&configs).unwrap();
    let batch = build_robot_sdfs(&s.sdfs, &poses, &s.grid, &s.points, &s.exact, Exec::default()).unwrap();
    let obstacles = workspace_obstacles(&s.grid, 500, &mut rng);
    let (got, _) = query_min_distances_counted(&batch, &obstacles, Exec::default()).unwrap();
    let oracle = exact_distances(s, &poses, &obstacles);
    let budget = error_budget(R_E, R_R);
    let h = reliable_horizon(E_R, s.model.link_reach(), R_E, R_R);
    let mut max_delta = 0f64;
    let mut informative = 0;
    for (g, o) in got.iter().zip(&oracle) {
        if *o < h {
            informative += 1;
        }
        max_delta = max_delta.max(((*g as f64).min(h) - o.min(h)).abs());
    }
    Outcome {
        pass: max_delta <= budget && informative > 0,
        detail: format!(
            "pipeline vs exact over 50 configurations x 500 voxels: max |delta| {:.4} m <= budget {:.4} m \
             ({informative}/50 minima below the {:.3} m horizon)",
            max_delta, budget, h
        ),
    }
}

fn criterion_2(s: &Setup) -> Outcome {
    let w = window_cells(E_R, &s.grid).unwrap();
    let points = CanonicalPoints::new(w, true);
    let cfg = TrainingConfig::default();
    let start = Instant::now();
    let (model, report) = train_approximator_with_report(&points, &cfg, Exec::default()).unwrap();
    let train_time = start.elapsed();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let err = evaluate_approximator(&model, &points, 100_000, &mut rng, Exec::default()).unwrap();

    // substituting the model into placement
    let sdf = &s.sdfs[0];
    let d_far = sdf.d_far();
    let (mut worst, mut flips, mut cells) = (0f32, 0usize, 0usize);
    for _ in 0..100 {
        let t = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let rot = UnitQuaternion::from_matrix(&sample_rotation(&mut rng));
        let pose = Isometry3::from_parts(Translation3::from(t), rot);
        let a = place_link(sdf, &pose, &s.grid, &s.points, &s.exact).unwrap();
        let b = place_link(sdf, &pose, &s.grid, &s.points, &model).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            cells += 1;
            // a point near the link-grid boundary may land on either side of it
            if (*x == d_far) != (*y == d_far) {
                flips += 1;
            } else {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Outcome {
        pass: err.max_abs_error <= 0.0013,
        detail: format!(
            "W={} ({} points), {} steps in {:.0?}: max error {:.2e} (mean {:.2e}) over 1e5 rotations, threshold 1.3e-3; \
             placement difference vs exact {:.2e} m ({:.2} x 1.3e-3 e_r), {} of {} cells crossing the link-grid edge",
            w[0],
            points.len(),
            report.steps,
            train_time,
            err.max_abs_error,
            err.mean_abs_error,
            worst,
            worst as f64 / (0.0013 * E_R),
            flips,
            cells
        ),
    }
}

fn criterion_3() -> Outcome {
    let w = 60;
    let grid = EnvGrid::cubic(2.0, 0.04).unwrap();
    let e_r = w as f64 * 0.04 / 2.0;
    let mask = sphere_mask(e_r, &grid).unwrap();
    let ratio = mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64;
    Outcome {
        pass: (ratio - PI / 6.0).abs() <= 0.02,
        detail: format!(
            "kept fraction at W=60 is {ratio:.4}; pi/6 = {:.4}, |difference| {:.4} vs tolerance 0.02",
            PI / 6.0,
            (ratio - PI / 6.0).abs()
        ),
    }
}

fn criterion_4() -> Outcome {
    let grid = EnvGrid::cubic(E_E, R_E).unwrap();
    let w = window_cells(E_R, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0f64;
    let mut failures = 0usize;
    let half = R_E / 2.0;
    for _ in 0..1_000_000 {
        let p = Vector3::from_fn(|_, _| rng.random_range(-E_E..E_E));
        let a = compute_alignment(&p, &grid, E_R).unwrap();
        let j = [0, 1, 2].map(|i| a.anchor[i] + (w[i] / 2) as i64);
        let in_range = (0..3).all(|i| a.delta_t[i] >= -half && a.delta_t[i] < half);
        let residual = (grid.center_of(j) + a.delta_t - p).amax();
        worst = worst.max(residual);
        if !in_range || !grid.contains(j) || residual > 4.0 * f64::EPSILON * E_E {
            failures += 1;
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "1e6 positions: {failures} violations, max reconstruction residual {worst:.1e} m"
        ),
    }
}

fn criterion_5() -> Outcome {
    let model = six_dof_model();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let configs = model.random_configs(1000, &mut rng);
    let start = Instant::now();
    let mut mismatches = 0;
    for exec in [Exec::Sequential, Exec::Parallel] {
        let batch = model.forward_kinematics_batch_with(&configs, exec).unwrap();
        for c in 0..configs.len() {
            if batch.config(c) != model.link_poses(configs.row(c)).as_slice() {
                mismatches += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!(
            "1e3 random 6-DoF configurations, sequential and parallel: {mismatches} differing poses ({:.0?})",
            start.elapsed()
        ),
    }
}

fn criterion_6(s: &Setup) -> Outcome {
    let spheres = SphereRobotModel::covering(&s.model, 3).unwrap();
    spheres.validate(&s.model).unwrap();
    let budget = error_budget(R_E, R_R);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let scenes = 10;
    for _ in 0..scenes {
        let configs = s.model.random_configs(20, &mut rng);
        let poses = s.model.forward_kinematics_batch(&configs).unwrap();
        let batch = build_robot_sdfs(&s.sdfs, &poses, &s.grid, &s.points, &s.exact, Exec::default()).unwrap();
        let obstacles = workspace_obstacles(&s.grid, 300, &mut rng);
        let (sdf, _) = query_min_distances_counted(&batch, &obstacles, Exec::default()).unwrap();
        let (sph, _) = sphere_baseline_distances_counted(&spheres, &poses, &obstacles, batch.d_far(), Exec::default());
        for (a, b) in sdf.iter().zip(&sph) {
            let excess = *b as f64 - *a as f64;
            worst = worst.max(excess);
            if excess > budget {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "{} spheres, {scenes} scenes x 20 configurations: baseline - field at most {worst:.4} m, budget {budget:.4} m, {violations} violations",
            spheres.len()
        ),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn time_ms(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    median(
        (0..reps)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect(),
    )
}

fn criterion_7(s: &Setup) -> Outcome {
    let exec = Exec::Sequential;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let spheres = SphereRobotModel::covering(&s.model, 3).unwrap();
    let c = 500;
    let configs = s.model.random_configs(c, &mut rng);

    // (a) preparation
    let sdf_prep = time_ms(3, || {
        let poses = s.model.forward_kinematics_batch_with(&configs, exec).unwrap();
        std::hint::black_box(build_robot_sdfs(&s.sdfs, &poses, &s.grid, &s.points, &s.exact, exec).unwrap());
    });
    let sph_prep = time_ms(3, || {
        std::hint::black_box(s.model.forward_kinematics_batch_with(&configs, exec).unwrap());
    });
    let sdf_prep_samples = (c * s.sdfs.len() * s.points.len()) as u64;
    let a_ok = sdf_prep > sph_prep;

    // (b) gather count and placement independence
    let poses = s.model.forward_kinematics_batch_with(&configs, exec).unwrap();
    let batch: RobotSdfBatch = build_robot_sdfs(&s.sdfs, &poses, &s.grid, &s.points, &s.exact, exec).unwrap();
    let occupied = 3000;
    let mut gathers_ok = true;
    let mut medians = Vec::new();
    for _ in 0..20 {
        let picked = sample(&mut rng, s.grid.voxel_count(), occupied);
        let obs = ObstacleVoxelSet::from_voxels(&s.grid, picked.iter().map(|l| s.grid.unravel(l))).unwrap();
        let (_, stats) = query_min_distances_counted(&batch, &obs, exec).unwrap();
        gathers_ok &= stats.gathers == (c * occupied) as u64 && stats.pose_ops == 0;
        medians.push(time_ms(15, || {
            std::hint::black_box(query_min_distances_counted(&batch, &obs, exec).unwrap());
        }));
    }
    let mean = medians.iter().sum::<f64>() / medians.len() as f64;
    let std = (medians.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (medians.len() - 1) as f64).sqrt();
    let cv = std / mean;
    let b_ok = gathers_ok && cv < 0.1;

    // (c) arithmetic counts
    let mut c_ok = true;
    for (cc, occ) in [(100usize, 1000usize), (100, 3000), (500, 1000), (500, 3000)] {
        let picked = sample(&mut rng, s.grid.voxel_count(), occ);
        let obs = ObstacleVoxelSet::from_voxels(&s.grid, picked.iter().map(|l| s.grid.unravel(l))).unwrap();
        let sub = LinkPoseBatch::from_poses(
            cc,
            poses.links(),
            (0..cc).flat_map(|i| poses.config(i).to_vec()).collect(),
        );
        let (_, st) = sphere_baseline_distances_counted(&spheres, &sub, &obs, batch.d_far(), exec);
        c_ok &= st.pose_ops == (cc * spheres.len() * occ) as u64 && st.gathers == 0;
    }
    let picked = sample(&mut rng, s.grid.voxel_count(), occupied);
    let obs = ObstacleVoxelSet::from_voxels(&s.grid, picked.iter().map(|l| s.grid.unravel(l))).unwrap();
    let sdf_query = time_ms(15, || {
        std::hint::black_box(query_min_distances_counted(&batch, &obs, exec).unwrap());
    });
    let sph_query = time_ms(5, || {
        std::hint::black_box(sphere_baseline_distances_counted(&spheres, &poses, &obs, batch.d_far(), exec));
    });

    say(&format!(
        "    (a) prepare: field {sdf_prep:.1} ms ({sdf_prep_samples} samples) vs spheres {sph_prep:.2} ms -> {}",
        if a_ok { "ok" } else { "violated" }
    ));
    say(&format!(
        "    (b) {c} configurations x {occupied} voxels: {} gathers per query, query-time CV {cv:.3} over 20 placements -> {}",
        c * occupied,
        if b_ok { "ok" } else { "violated" }
    ));
    say(&format!(
        "    (c) sphere distances = C x {} x |occupied| on 4 sizes, field pose arithmetic 0 -> {}",
        spheres.len(),
        if c_ok { "ok" } else { "violated" }
    ));
    say(&format!(
        "    measured per-query: field {sdf_query:.3} ms, spheres {sph_query:.2} ms; reference 0.391 ms vs 5.47 ms, under 1 ms for 500 waypoints"
    ));
    Outcome {
        pass: a_ok && b_ok && c_ok,
        detail: "cost shape: (a) preparation, (b) gathers and placement independence, (c) arithmetic scaling".into(),
    }
}

fn criterion_8(s: &Setup) -> Outcome {
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    // superset monotonicity
    let configs = s.model.random_configs(20, &mut rng);
    let poses = s.model.forward_kinematics_batch(&configs).unwrap();
    let batch = build_robot_sdfs(&s.sdfs, &poses, &s.grid, &s.points, &s.exact, Exec::default()).unwrap();
    let candidates: Vec<_> = (0..s.grid.voxel_count())
        .filter(|&l| s.grid.center(s.grid.unravel(l)).norm() <= WORKSPACE)
        .collect();
    let mut mono_fail = 0;
    for _ in 0..TRIALS {
        let nb = rng.random_range(1..=64);
        let b: Vec<_> = sample(&mut rng, candidates.len(), nb).iter().map(|i| candidates[i]).collect();
        let na = rng.random_range(0..=nb);
        let a: Vec<_> = sample(&mut rng, nb, na).iter().map(|i| b[i]).collect();
        let set = |v: &[usize]| ObstacleVoxelSet::from_voxels(&s.grid, v.iter().map(|&l| s.grid.unravel(l))).unwrap();
        let (da, _) = query_min_distances_counted(&batch, &set(&a), Exec::Sequential).unwrap();
        let (db, _) = query_min_distances_counted(&batch, &set(&b), Exec::Sequential).unwrap();
        if da.iter().zip(&db).any(|(x, y)| x < y) {
            mono_fail += 1;
        }
    }

    // min-merge idempotence
    let small = EnvGrid::cubic(0.25, 0.05).unwrap();
    let mut idem_fail = 0;
    for _ in 0..TRIALS {
        let w = 2 * rng.random_range(1..=3);
        let field = SdfSampleField {
            anchor: [0, 1, 2].map(|_| rng.random_range(-(w as i64)..12)),
            window: [w; 3],
            values: (0..w * w * w).map(|_| rng.random_range(-0.2f32..0.4)).collect(),
        };
        let mut once = RobotSdfBatch::new(&small, 1, 0.3).unwrap();
        let prior = SdfSampleField {
            anchor: [3, 3, 3],
            window: [4; 3],
            values: (0..64).map(|_| rng.random_range(-0.2f32..0.4)).collect(),
        };
        once.merge(0, &prior);
        once.merge(0, &field);
        let mut twice = once.clone();
        twice.merge(0, &field);
        if once != twice {
            idem_fail += 1;
        }
    }

    // interpolation bounds
    let mut interp_fail = 0;
    for _ in 0..TRIALS / 100 {
        let values: Vec<f32> = (0..8 * 8 * 8).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let sdf = LinkSdf::new(0, [8; 3], [0.4; 3], [0.1; 3], values).unwrap();
        for _ in 0..100 {
            let q = Vector3::from_fn(|_, _| rng.random_range(-0.4..0.4));
            let v = sdf.sample(&q);
            let n = sdf.neighborhood(&q).unwrap();
            let lo = n.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = n.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            if v < lo - 1e-6 || v > hi + 1e-6 {
                interp_fail += 1;
            }
        }
    }
    Outcome {
        pass: mono_fail + idem_fail + interp_fail == 0,
        detail: format!(
            "1e4 trials each: superset monotonicity {mono_fail} failures, merge idempotence {idem_fail}, interpolation bounds {interp_fail}"
        ),
    }
}

#[test]
fn acceptance() {
    let s = setup();
    let criteria: Vec<(u8, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "full-pipeline oracle equivalence", Box::new(|| criterion_1(&s))),
        (2, "neural approximation error", Box::new(|| criterion_2(&s))),
        (3, "sphere-mask reduction", Box::new(criterion_3)),
        (4, "alignment contract", Box::new(criterion_4)),
        (5, "batched forward kinematics", Box::new(criterion_5)),
        (6, "sphere baseline conservativeness", Box::new(|| criterion_6(&s))),
        (7, "cost shape", Box::new(|| criterion_7(&s))),
        (8, "property suites", Box::new(|| criterion_8(&s))),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in &criteria {
        let start = Instant::now();
        let out = run();
        say(&format!(
            "[{}] criterion {id} ({name}): {} [{:.1?}]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed()
        ));
        if !out.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
