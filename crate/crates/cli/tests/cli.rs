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
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;

use linksdf::format::{read_link_sdf, read_model, write_cloud_frame, write_manifest};

const SMALL: &[&str] = &["--link-extent", "0.32", "--link-res", "0.02"];

fn linksdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linksdf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = linksdf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn precompute_writes_one_file_per_link() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cache");
    ok(&with_small(&["precompute", "--out", p(&out)]));
    let mut names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["link_1.lsdf", "link_2.lsdf", "link_3.lsdf"]);

    let first = read_link_sdf(&out.join("link_2.lsdf")).unwrap();
    let again = linksdf(&with_small(&["precompute", "--out", p(&out)]));
    assert_eq!(again.status.code(), Some(2));
    ok(&with_small(&["--sequential", "precompute", "--out", p(&out), "--force"]));
    assert_eq!(read_link_sdf(&out.join("link_2.lsdf")).unwrap(), first);
}

#[test]
fn bench_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let text = ok(&with_small(&[
        "bench", "--configs", "1", "--obstacles", "1", "--reps", "5", "--out", p(&csv),
    ]));
    assert!(text.contains("gathers per query"));
    let body = std::fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    let mut shape = vec![lines.next().unwrap().to_string()];
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 6, "{l}");
        assert!(f[2].parse::<f64>().unwrap() >= 0.0);
        assert!(f[4].parse::<usize>().unwrap() >= 5);
        shape.push(format!("{},{}", f[0], f[1]));
    }
    let golden = include_str!("golden/bench_schema.txt");
    assert_eq!(shape, golden.lines().collect::<Vec<_>>());
}

/// Frames of a wall of points sweeping from `x0` toward the base.
fn wall_frames(dir: &Path, frames: usize, x0: f64) -> PathBuf {
    let mut entries = Vec::new();
    for k in 0..frames {
        let x = x0 - 0.04 * k as f64;
        let pts: Vec<_> = (0..400)
            .map(|i| Vector3::new(x, -0.95 + 0.1 * (i % 20) as f64, -0.95 + 0.1 * (i / 20) as f64))
            .collect();
        let name = format!("f{k}.bin");
        write_cloud_frame(&dir.join(&name), &pts).unwrap();
        entries.push((100 * k as u64, PathBuf::from(name)));
    }
    let manifest = dir.join("clouds.txt");
    write_manifest(&manifest, &entries).unwrap();
    manifest
}

#[test]
fn replay_empty_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.txt");
    std::fs::write(&manifest, "# nothing yet\n").unwrap();
    let out = dir.path().join("d.csv");
    ok(&with_small(&["replay", "--configs", "2", "--clouds", p(&manifest), "--out", p(&out)]));
    let body = std::fs::read_to_string(&out).unwrap();
    assert_eq!(body.lines().count(), 1);
}

#[test]
fn replay_approach_is_deterministic_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = wall_frames(dir.path(), 20, 0.98);
    let (a, b, m) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("m.csv"));
    let args = |out: &Path| {
        with_small(&["replay", "--configs", "3", "--seed", "5", "--clouds", p(&manifest), "--out", p(out)])
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let mut first: Vec<String> = args(&a);
    first.extend(["--min-out".to_string(), p(&m).to_string()]);
    ok(&first.iter().map(String::as_str).collect::<Vec<_>>());
    let mut second = vec!["--sequential".to_string()];
    second.extend(args(&b));
    ok(&second.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mins: Vec<f64> = std::fs::read_to_string(&m)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mins.len(), 20);
    assert!(mins.windows(2).all(|w| w[1] <= w[0]), "{mins:?}");
    assert!(mins.last().unwrap() < mins.first().unwrap());
}

#[test]
fn train_small_window_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let text = ok(&[
            "train", "--window", "4", "--steps", "300", "--lr", "1e-3", "--accept-max-error", "1",
            "--eval-samples", "200", "--out", p(&out),
        ]);
        let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(summary["window"], 4);
        assert_eq!(summary["accepted"], true);
        read_model(&out).unwrap()
    };
    assert_eq!(run("a.tmlp"), run("b.tmlp"));
}

#[test]
fn unmet_accuracy_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.tmlp");
    let res = linksdf(&[
        "train", "--window", "4", "--steps", "10", "--accept-max-error", "1e-9", "--eval-samples", "50",
        "--out", p(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
    // the model is still written for inspection
    assert!(out.exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.tmlp");
    assert_eq!(linksdf(&["train", "--window", "5", "--out", p(&out)]).status.code(), Some(2));
    let cache = dir.path().join("c");
    assert_eq!(
        linksdf(&["precompute", "--robot", "builtin:nope", "--out", p(&cache)]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("missing.txt");
    let res = linksdf(&["replay", "--clouds", p(&missing), "--out", p(&dir.path().join("d.csv"))]);
    assert_eq!(res.status.code(), Some(3));
    assert_eq!(linksdf(&["bench", "--grid-res", "0.07"]).status.code(), Some(2));
}
