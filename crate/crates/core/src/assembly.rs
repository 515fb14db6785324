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
//! Robot fields, obstacle voxelization and distance queries.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{EnvGrid, LinkSdf, SdfSampleField, VoxelIndex};
use crate::par::{self, Exec};
use crate::placement::{
    compute_alignment, place_links_batch, CanonicalPoints, PlacementContext, TransformProvider,
    PROVIDER_BLOCK,
};
use crate::robot::{LinkPoseBatch, RobotModel};

/// Upper bound on the memory of one [`RobotSdfBatch`].
pub const MEMORY_LIMIT_BYTES: u64 = 1 << 30;

/// Far sentinel shared by all links: the smallest link half-extent.
pub fn d_far_global(sdfs: &[LinkSdf]) -> f32 {
    sdfs.iter().map(LinkSdf::d_far).fold(f32::INFINITY, f32::min)
}

/// Worst-case deviation of a robot-field distance from the exact distance:
/// half a voxel diagonal for snapping plus half a link-cell diagonal for
/// interpolation.
pub fn error_budget(env_res: f64, link_res: f64) -> f64 {
    3f64.sqrt() * (env_res / 2.0 + link_res / 2.0)
}

/// Distances up to this value are fully represented in the robot fields.
/// Beyond it an obstacle may fall outside a link's trimmed window, in which
/// case the field reports its far sentinel instead.
pub fn reliable_horizon(extent_r: f64, link_reach: f64, env_res: f64, link_res: f64) -> f64 {
    extent_r - link_reach - 3f64.sqrt() * env_res / 2.0 - link_res
}

/// One dense distance field over the environment grid per configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSdfBatch {
    grid: EnvGrid,
    configs: usize,
    d_far: f32,
    values: Vec<f32>,
}

impl RobotSdfBatch {
    /// All voxels start at `d_far`. Fails before allocating when the batch
    /// would exceed [`MEMORY_LIMIT_BYTES`].
    pub fn new(grid: &EnvGrid, configs: usize, d_far: f32) -> Result<Self> {
        let required = configs as u64 * grid.voxel_count() as u64 * 4;
        if required > MEMORY_LIMIT_BYTES {
            return Err(Error::MemoryLimit {
                required,
                limit: MEMORY_LIMIT_BYTES,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            configs,
            d_far,
            values: vec![d_far; configs * grid.voxel_count()],
        })
    }

    pub fn grid(&self) -> &EnvGrid {
        &self.grid
    }

    pub fn configs(&self) -> usize {
        self.configs
    }

    pub fn d_far(&self) -> f32 {
        self.d_far
    }

    pub fn field(&self, config: usize) -> &[f32] {
        let n = self.grid.voxel_count();
        &self.values[config * n..(config + 1) * n]
    }

    pub fn value(&self, config: usize, v: VoxelIndex) -> f32 {
        self.field(config)[self.grid.linear_index(v)]
    }

    /// Lowers configuration `config` by `field`.
    pub fn merge(&mut self, config: usize, field: &SdfSampleField) {
        let n = self.grid.voxel_count();
        let dims = self.grid.dims();
        merge_into(&mut self.values[config * n..(config + 1) * n], dims, field);
    }
}

fn merge_into(dst: &mut [f32], dims: [usize; 3], field: &SdfSampleField) {
    let w = field.window;
    let range = |a: usize| {
        let lo = (-field.anchor[a]).max(0) as usize;
        let hi = (dims[a] as i64 - field.anchor[a]).clamp(0, w[a] as i64) as usize;
        lo..hi.max(lo)
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    for z in rz {
        let ez = (field.anchor[2] + z as i64) as usize;
        for y in ry.clone() {
            let ey = (field.anchor[1] + y as i64) as usize;
            let src = &field.values[(z * w[1] + y) * w[0]..][..w[0]];
            let row = (ez * dims[1] + ey) * dims[0];
            for x in rx.clone() {
                let d = &mut dst[row + (field.anchor[0] + x as i64) as usize];
                *d = d.min(src[x]);
            }
        }
    }
}

/// Min-merges sample fields ordered `[configuration][link]` into a batch of
/// `configs` robot fields. Each configuration is written by one task.
pub fn assemble_robot_sdfs(
    fields: &[SdfSampleField],
    configs: usize,
    grid: &EnvGrid,
    d_far: f32,
    exec: Exec,
) -> Result<RobotSdfBatch> {
    if configs == 0 && !fields.is_empty() || configs > 0 && !fields.len().is_multiple_of(configs) {
        return Err(Error::DimensionMismatch(format!(
            "{} fields do not split into {configs} configurations",
            fields.len()
        )));
    }
    let per = fields.len().checked_div(configs).unwrap_or(0);
    let mut batch = RobotSdfBatch::new(grid, configs, d_far)?;
    let dims = grid.dims();
    let n = grid.voxel_count();
    par::for_each_chunk_mut(exec, &mut batch.values, n, |c, dst| {
        for f in &fields[c * per..(c + 1) * per] {
            merge_into(dst, dims, f);
        }
    });
    Ok(batch)
}

/// Placement and min-merge in one pass, without materialising the
/// per-link windows. Produces the same batch as [`place_links_batch`]
/// followed by [`assemble_robot_sdfs`] with [`d_far_global`].
pub fn build_robot_sdfs(
    sdfs: &[LinkSdf],
    poses: &LinkPoseBatch,
    grid: &EnvGrid,
    points: &CanonicalPoints,
    provider: &dyn TransformProvider,
    exec: Exec,
) -> Result<RobotSdfBatch> {
    let refs: Vec<&LinkSdf> = sdfs.iter().collect();
    let ctx = PlacementContext::new(&refs, grid, points, provider)?;
    let nl = sdfs.len();
    let configs = poses.configs();
    let alignments = (0..configs * nl)
        .map(|n| {
            let pose = poses.get(n / nl, sdfs[n % nl].link_id() as usize);
            compute_alignment(&pose.translation.vector, grid, ctx.extent_r)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut batch = RobotSdfBatch::new(grid, configs, d_far_global(sdfs))?;
    let dims = grid.dims();
    let stride = 3 * points.len();
    par::for_each_chunk_mut(exec, &mut batch.values, grid.voxel_count(), |c, dst| {
        for block in (0..nl).collect::<Vec<_>>().chunks(PROVIDER_BLOCK) {
            let rotations: Vec<Matrix3<f64>> = block
                .iter()
                .map(|&i| {
                    let pose = poses.get(c, sdfs[i].link_id() as usize);
                    pose.rotation.to_rotation_matrix().into_inner()
                })
                .collect();
            let mut rotated = vec![0f32; stride * block.len()];
            provider.rotate_batch(&rotations, &mut rotated);
            for (&i, rot) in block.iter().zip(rotated.chunks_exact(stride)) {
                let sdf = &sdfs[i];
                let pose = poses.get(c, sdf.link_id() as usize);
                let al = &alignments[c * nl + i];
                ctx.sample(sdf, pose, al, rot, |_, cell, v| {
                    let e = [0, 1, 2].map(|a| al.anchor[a] + cell[a] as i64);
                    if (0..3).all(|a| e[a] >= 0 && (e[a] as usize) < dims[a]) {
                        let d = &mut dst[(e[2] as usize * dims[1] + e[1] as usize) * dims[0]
                            + e[0] as usize];
                        *d = d.min(v);
                    }
                });
            }
        }
    });
    Ok(batch)
}

/// Occupied voxels of one point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleVoxelSet {
    grid: EnvGrid,
    occupied: Vec<usize>,
    source_points: usize,
    dropped: usize,
}

impl ObstacleVoxelSet {
    /// Builds a set from voxel indices; duplicates are removed.
    pub fn from_voxels(grid: &EnvGrid, voxels: impl IntoIterator<Item = VoxelIndex>) -> Result<Self> {
        let dims = grid.dims();
        let mut occupied = Vec::new();
        for v in voxels {
            if (0..3).any(|a| v[a] >= dims[a]) {
                return Err(Error::DimensionMismatch(format!("voxel {v:?} outside grid {dims:?}")));
            }
            occupied.push(grid.linear_index(v));
        }
        let source_points = occupied.len();
        occupied.sort_unstable();
        occupied.dedup();
        Ok(Self {
            grid: grid.clone(),
            occupied,
            source_points,
            dropped: 0,
        })
    }

    pub fn grid(&self) -> &EnvGrid {
        &self.grid
    }

    /// Sorted linear voxel indices.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    pub fn voxels(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.occupied.iter().map(|&l| self.grid.unravel(l))
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn source_points(&self) -> usize {
        self.source_points
    }

    /// Points that fell outside the grid.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

pub fn voxelize_pointcloud(points: &[Vector3<f64>], grid: &EnvGrid) -> ObstacleVoxelSet {
    let mut occupied: Vec<usize> = points
        .iter()
        .filter_map(|p| grid.voxel_index_of(p).ok())
        .map(|v| grid.linear_index(v))
        .collect();
    let dropped = points.len() - occupied.len();
    if dropped > 0 {
        log::debug!("dropped {dropped} of {} points outside the grid", points.len());
    }
    occupied.sort_unstable();
    occupied.dedup();
    ObstacleVoxelSet {
        grid: grid.clone(),
        occupied,
        source_points: points.len(),
        dropped,
    }
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryStats {
    /// Field values read.
    pub gathers: u64,
    /// Arithmetic on poses, points or sphere centres.
    pub pose_ops: u64,
}

/// Minimum robot-field value over the occupied voxels, per configuration.
pub fn query_min_distances(batch: &RobotSdfBatch, obstacles: &ObstacleVoxelSet) -> Result<Vec<f32>> {
    query_min_distances_counted(batch, obstacles, Exec::Sequential).map(|(d, _)| d)
}

pub fn query_min_distances_counted(
    batch: &RobotSdfBatch,
    obstacles: &ObstacleVoxelSet,
    exec: Exec,
) -> Result<(Vec<f32>, QueryStats)> {
    if batch.grid != obstacles.grid {
        return Err(Error::GridMismatch);
    }
    let occ = &obstacles.occupied;
    let d = par::map_range(exec, batch.configs, |c| {
        let field = batch.field(c);
        occ.iter().fold(batch.d_far, |m, &v| m.min(field[v]))
    });
    let stats = QueryStats {
        gathers: (batch.configs * occ.len()) as u64,
        pose_ops: 0,
    };
    Ok((d, stats))
}

/// Per-link minimum over the occupied voxels, `[configuration][link]`, each
/// clamped to that link's far sentinel.
pub fn per_link_min_distances(
    sdfs: &[LinkSdf],
    poses: &LinkPoseBatch,
    grid: &EnvGrid,
    points: &CanonicalPoints,
    provider: &dyn TransformProvider,
    obstacles: &ObstacleVoxelSet,
    exec: Exec,
) -> Result<Vec<f32>> {
    if *grid != obstacles.grid {
        return Err(Error::GridMismatch);
    }
    let fields = place_links_batch(sdfs, poses, grid, points, provider, exec)?;
    let voxels: Vec<VoxelIndex> = obstacles.voxels().collect();
    let nl = sdfs.len();
    Ok(par::map_range(exec, fields.len(), |n| {
        let far = sdfs[n % nl].d_far();
        voxels
            .iter()
            .filter_map(|&v| fields[n].value_at(v))
            .fold(far, f32::min)
    }))
}

/// Spheres approximating each collision link, in link coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRobotModel {
    /// `(link id, centre, radius)`.
    spheres: Vec<(u32, Vector3<f64>, f64)>,
}

/// Surface samples per link used when fitting and checking coverage.
const COVERAGE_SAMPLES: usize = 2000;

impl SphereRobotModel {
    pub fn new(spheres: Vec<(u32, Vector3<f64>, f64)>) -> Result<Self> {
        if let Some(s) = spheres.iter().find(|s| !(s.2 > 0.0) || !s.1.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidModel(format!("bad sphere {s:?}")));
        }
        Ok(Self { spheres })
    }

    /// Spheres declared in the robot description, checked for coverage.
    pub fn from_model(model: &RobotModel) -> Result<Self> {
        let spheres = model
            .links()
            .iter()
            .flat_map(|l| {
                l.spheres
                    .iter()
                    .map(move |s| (l.id, Vector3::from(s.center), s.radius))
            })
            .collect();
        let m = Self::new(spheres)?;
        m.validate(model)?;
        Ok(m)
    }

    /// Fits `per_link` spheres along the longest axis of each collision
    /// link's bounding box, sized to cover every surface sample.
    pub fn covering(model: &RobotModel, per_link: usize) -> Result<Self> {
        let per_link = per_link.max(1);
        let mut spheres = Vec::new();
        for link in model.collision_links() {
            let samples = link
                .collision
                .as_ref()
                .expect("collision link")
                .surface_samples(COVERAGE_SAMPLES);
            let lo = samples.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(p));
            let hi = samples
                .iter()
                .fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
            let span = hi - lo;
            let axis = span.imax();
            let mid = (lo + hi) / 2.0;
            let centers: Vec<Vector3<f64>> = (0..per_link)
                .map(|i| {
                    let mut c = mid;
                    c[axis] = lo[axis] + (i as f64 + 0.5) * span[axis] / per_link as f64;
                    c
                })
                .collect();
            let mut radii = vec![0f64; per_link];
            for p in &samples {
                let (i, d) = centers
                    .iter()
                    .map(|c| (p - c).norm())
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("non-empty");
                radii[i] = radii[i].max(d);
            }
            // margin for surface points between samples
            let margin = 2e-3 * span.norm().max(1e-3);
            for (c, r) in centers.into_iter().zip(radii) {
                spheres.push((link.id, c, r + margin));
            }
        }
        let m = Self::new(spheres)?;
        m.validate(model)?;
        Ok(m)
    }

    /// Checks that every collision surface sample lies inside some sphere of
    /// its link.
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        for link in model.collision_links() {
            let own: Vec<_> = self.spheres.iter().filter(|s| s.0 == link.id).collect();
            if own.is_empty() {
                return Err(Error::InvalidModel(format!("link {} has no spheres", link.name)));
            }
            let samples = link
                .collision
                .as_ref()
                .expect("collision link")
                .surface_samples(2 * COVERAGE_SAMPLES + 1);
            let worst = samples
                .iter()
                .map(|p| own.iter().map(|s| (p - s.1).norm() - s.2).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            if worst > 0.0 {
                return Err(Error::InvalidModel(format!(
                    "spheres of link {} leave surface uncovered by {worst:.4} m",
                    link.name
                )));
            }
        }
        Ok(())
    }

    pub fn spheres(&self) -> &[(u32, Vector3<f64>, f64)] {
        &self.spheres
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }
}

/// Distance from sphere surfaces to occupied voxel centres, computed per
/// query from the poses. Results are clamped to `d_far` to share the robot
/// field's sentinel.
pub fn sphere_baseline_distances(
    model: &SphereRobotModel,
    poses: &LinkPoseBatch,
    obstacles: &ObstacleVoxelSet,
    d_far: f32,
) -> Vec<f32> {
    sphere_baseline_distances_counted(model, poses, obstacles, d_far, Exec::Sequential).0
}

pub fn sphere_baseline_distances_counted(
    model: &SphereRobotModel,
    poses: &LinkPoseBatch,
    obstacles: &ObstacleVoxelSet,
    d_far: f32,
    exec: Exec,
) -> (Vec<f32>, QueryStats) {
    let centers: Vec<Vector3<f64>> = obstacles
        .occupied
        .iter()
        .map(|&l| obstacles.grid.center(obstacles.grid.unravel(l)))
        .collect();
    let d = par::map_range(exec, poses.configs(), |c| {
        let mut best = f64::INFINITY;
        for (link, offset, r) in &model.spheres {
            let w = poses.get(c, *link as usize).transform_point(&(*offset).into()).coords;
            for v in &centers {
                best = best.min((w - v).norm() - r);
            }
        }
        (best as f32).min(d_far)
    });
    let stats = QueryStats {
        gathers: 0,
        pose_ops: (poses.configs() * model.spheres.len() * centers.len()) as u64,
    };
    (d, stats)
}

/// One point-cloud frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudFrame {
    pub timestamp_ms: u64,
    pub points: Vec<Vector3<f64>>,
}

/// Voxelizes and queries each frame in arrival order, returning
/// `(timestamp, distances)` per frame.
pub fn distances_along_trajectory<I>(
    batch: &RobotSdfBatch,
    frames: I,
    exec: Exec,
) -> Result<Vec<(u64, Vec<f32>)>>
where
    I: IntoIterator<Item = Result<CloudFrame>>,
{
    frames
        .into_iter()
        .map(|f| {
            let f = f?;
            let obs = voxelize_pointcloud(&f.points, batch.grid());
            let (d, _) = query_min_distances_counted(batch, &obs, exec)?;
            Ok((f.timestamp_ms, d))
        })
        .collect()
}
