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
//! Rotating link fields and snapping them onto the environment grid.
//!
//! A link window is `W = 2 * e_r / r_e` voxels wide per axis (`W` even). For a
//! link at translation `T`, [`compute_alignment`] finds the voxel `j` holding
//! `T` and anchors the window at `k = j - W/2`, so the window covers voxels
//! `[j - W/2, j + W/2)` and its geometric centre is the lower corner of `j`.
//! The canonical points `P` are the window cell centres relative to that
//! centre, normalised by `e_r`; the link-frame sample positions are
//!
//! ```text
//! G = Rᵀ P - Rᵀ s / e_r,    s = T - window_centre = δt + r_e / 2
//! ```
//!
//! and the sampled value of the link field at `G * e_r` becomes the window
//! cell's distance.

use nalgebra::{Isometry3, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{exact_ratio, linear_index, unravel, EnvGrid, LinkSdf, SdfSampleField};
use crate::par::{self, Exec};
use crate::robot::LinkPoseBatch;

/// Integer anchor of a link window plus the sub-voxel residual of the link
/// origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    /// Environment voxel covered by window cell `(0, 0, 0)`.
    pub anchor: [i64; 3],
    /// `T - center(voxel of T)`, each component in `[-r_e/2, r_e/2)`.
    pub delta_t: Vector3<f64>,
}

impl AlignmentResult {
    /// Offset of `T` from the window's geometric centre.
    pub fn window_shift(&self, grid: &EnvGrid) -> Vector3<f64> {
        self.delta_t + grid.resolution() * 0.5
    }
}

/// Window width in voxels per axis for a link of half-extent `extent_r`.
pub fn window_cells(extent_r: f64, grid: &EnvGrid) -> Result<[usize; 3]> {
    let mut w = [0; 3];
    for a in 0..3 {
        let err = |reason| Error::Window {
            axis: a,
            extent: extent_r,
            resolution: grid.resolution()[a],
            reason,
        };
        let n = exact_ratio(2.0 * extent_r, grid.resolution()[a])
            .ok_or_else(|| err("2 * extent is not a multiple of the voxel size"))?;
        if n % 2 != 0 {
            return Err(err("window width must be an even number of voxels"));
        }
        w[a] = n;
    }
    Ok(w)
}

pub fn compute_alignment(
    t: &Vector3<f64>,
    grid: &EnvGrid,
    extent_r: f64,
) -> Result<AlignmentResult> {
    let w = window_cells(extent_r, grid)?;
    let (j, delta_t) = grid.locate(t);
    let anchor = [0, 1, 2].map(|a| j[a] - (w[a] / 2) as i64);
    let dims = grid.dims();
    let overlaps =
        (0..3).all(|a| anchor[a] + (w[a] as i64) > 0 && anchor[a] < dims[a] as i64);
    if !overlaps {
        return Err(Error::NoOverlap { anchor });
    }
    Ok(AlignmentResult { anchor, delta_t })
}

/// Window cell centres in link-normalised coordinates.
///
/// Normalised coordinates depend only on the window width: on axis `a` the
/// spacing is `r_e / e_r = 2 / W_a`. With `masked`, only cells inside the
/// trimming sphere (see [`sphere_mask`]) are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPoints {
    window: [usize; 3],
    points: Vec<Vector3<f64>>,
    cells: Vec<[u32; 3]>,
    masked: bool,
}

impl CanonicalPoints {
    pub fn new(window: [usize; 3], masked: bool) -> Self {
        let mask = masked.then(|| window_sphere_mask(window));
        let total: usize = window.iter().product();
        let mut points = Vec::new();
        let mut cells = Vec::new();
        for lin in 0..total {
            if mask.as_ref().is_some_and(|m| !m[lin]) {
                continue;
            }
            let c = unravel(window, lin);
            points.push(normalized_offset(window, c));
            cells.push(c.map(|v| v as u32));
        }
        Self {
            window,
            points,
            cells,
            masked,
        }
    }

    /// Every cell of the window for `extent_r` on `grid`.
    pub fn full(extent_r: f64, grid: &EnvGrid) -> Result<Self> {
        Ok(Self::new(window_cells(extent_r, grid)?, false))
    }

    /// Only the cells kept by the sphere mask.
    pub fn masked(extent_r: f64, grid: &EnvGrid) -> Result<Self> {
        Ok(Self::new(window_cells(extent_r, grid)?, true))
    }

    pub fn window(&self) -> [usize; 3] {
        self.window
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Window coordinate of each point.
    pub fn cells(&self) -> &[[u32; 3]] {
        &self.cells
    }
}

fn normalized_offset(window: [usize; 3], c: [usize; 3]) -> Vector3<f64> {
    Vector3::from_fn(|a, _| (c[a] as f64 - window[a] as f64 / 2.0 + 0.5) * 2.0 / window[a] as f64)
}

fn window_sphere_mask(window: [usize; 3]) -> Vec<bool> {
    // radius e_r + |r_e| / 2, normalised by e_r
    let half_diag = (0..3)
        .map(|a| (1.0 / window[a] as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let radius = 1.0 + half_diag;
    let total: usize = window.iter().product();
    (0..total)
        .map(|lin| normalized_offset(window, unravel(window, lin)).norm() <= radius)
        .collect()
}

/// Cells of the window whose centre lies within `e_r + |r_e|/2` of the window
/// centre; the rest are never sampled.
pub fn sphere_mask(extent_r: f64, grid: &EnvGrid) -> Result<Vec<bool>> {
    Ok(window_sphere_mask(window_cells(extent_r, grid)?))
}

/// Link-frame sample positions, normalised by `e_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTransform {
    pub points: Vec<Vector3<f32>>,
}

/// `-Rᵀ shift / e_r`: the translation part of the inverse window map.
pub fn inverse_shift(r: &Matrix3<f64>, shift: &Vector3<f64>, extent_r: f64) -> Vector3<f64> {
    -(r.transpose() * shift) / extent_r
}

/// `G = Rᵀ P - Rᵀ shift / e_r` evaluated directly.
pub fn grid_transform_exact(
    r: &Matrix3<f64>,
    shift: &Vector3<f64>,
    extent_r: f64,
    p: &CanonicalPoints,
) -> GridTransform {
    let rt = r.transpose();
    let inv = inverse_shift(r, shift, extent_r);
    GridTransform {
        points: p.points().iter().map(|q| (rt * q + inv).cast()).collect(),
    }
}

/// Supplies `f(R) ≈ Rᵀ P` for batches of rotations.
pub trait TransformProvider: Sync {
    /// Number of canonical points each rotation maps.
    fn num_points(&self) -> usize;

    /// Writes `3 * num_points()` floats per rotation (`x, y, z` per point)
    /// into `out`.
    fn rotate_batch(&self, rotations: &[Matrix3<f64>], out: &mut [f32]);
}

/// Exact matrix product `Rᵀ P`.
#[derive(Debug, Clone)]
pub struct ExactProvider {
    points: Vec<Vector3<f64>>,
}

impl ExactProvider {
    pub fn new(points: &CanonicalPoints) -> Self {
        Self {
            points: points.points().to_vec(),
        }
    }
}

impl TransformProvider for ExactProvider {
    fn num_points(&self) -> usize {
        self.points.len()
    }

    fn rotate_batch(&self, rotations: &[Matrix3<f64>], out: &mut [f32]) {
        let stride = 3 * self.points.len();
        for (r, o) in rotations.iter().zip(out.chunks_exact_mut(stride)) {
            let rt = r.transpose();
            for (p, dst) in self.points.iter().zip(o.chunks_exact_mut(3)) {
                let g = rt * p;
                dst[0] = g.x as f32;
                dst[1] = g.y as f32;
                dst[2] = g.z as f32;
            }
        }
    }
}

/// Geometry shared by every placement against one grid.
pub(crate) struct PlacementContext<'a> {
    pub grid: &'a EnvGrid,
    pub points: &'a CanonicalPoints,
    pub extent_r: f64,
}

impl<'a> PlacementContext<'a> {
    pub fn new(
        sdfs: &[&LinkSdf],
        grid: &'a EnvGrid,
        points: &'a CanonicalPoints,
        provider: &dyn TransformProvider,
    ) -> Result<Self> {
        if provider.num_points() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "provider maps {} points, window has {}",
                provider.num_points(),
                points.len()
            )));
        }
        let first = sdfs
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no link fields".into()))?;
        let extent_r = link_extent(first)?;
        for s in sdfs {
            let e = link_extent(s)?;
            if (e - extent_r).abs() > 1e-6 * extent_r {
                return Err(Error::DimensionMismatch(format!(
                    "link {} has extent {e}, expected {extent_r}",
                    s.link_id()
                )));
            }
        }
        let w = window_cells(extent_r, grid)?;
        if w != points.window() {
            return Err(Error::DimensionMismatch(format!(
                "canonical points are for window {:?}, links need {w:?}",
                points.window()
            )));
        }
        // use the extent implied by the grid so window geometry is exact
        let extent_r = w[0] as f64 * grid.resolution()[0] / 2.0;
        Ok(Self {
            grid,
            points,
            extent_r,
        })
    }

    /// Calls `emit(point_index, window_cell, value)` for every canonical point.
    pub fn sample<F>(
        &self,
        sdf: &LinkSdf,
        pose: &Isometry3<f64>,
        alignment: &AlignmentResult,
        rotated: &[f32],
        mut emit: F,
    ) where
        F: FnMut(usize, [u32; 3], f32),
    {
        let r = pose.rotation.to_rotation_matrix().into_inner();
        let inv = inverse_shift(&r, &alignment.window_shift(self.grid), self.extent_r);
        let e = self.extent_r;
        for (j, (g, cell)) in rotated.chunks_exact(3).zip(self.points.cells()).enumerate() {
            let q = Vector3::new(
                (g[0] as f64 + inv.x) * e,
                (g[1] as f64 + inv.y) * e,
                (g[2] as f64 + inv.z) * e,
            );
            emit(j, *cell, sdf.sample(&q));
        }
    }
}

fn link_extent(sdf: &LinkSdf) -> Result<f64> {
    let e = sdf.extent();
    if e.iter().any(|v| (v - e[0]).abs() > 1e-6 * e[0].abs()) {
        return Err(Error::DimensionMismatch(format!(
            "link {} has anisotropic extent {e:?}",
            sdf.link_id()
        )));
    }
    Ok(e[0] as f64)
}

/// Resamples one link field onto the environment window at `pose`.
/// Masked-out cells carry the link's far sentinel.
pub fn place_link(
    sdf: &LinkSdf,
    pose: &Isometry3<f64>,
    grid: &EnvGrid,
    points: &CanonicalPoints,
    provider: &dyn TransformProvider,
) -> Result<SdfSampleField> {
    let ctx = PlacementContext::new(&[sdf], grid, points, provider)?;
    let alignment = compute_alignment(&pose.translation.vector, grid, ctx.extent_r)?;
    let r = pose.rotation.to_rotation_matrix().into_inner();
    let mut rotated = vec![0f32; 3 * points.len()];
    provider.rotate_batch(&[r], &mut rotated);
    Ok(sample_field(&ctx, sdf, pose, &alignment, &rotated))
}

fn sample_field(
    ctx: &PlacementContext<'_>,
    sdf: &LinkSdf,
    pose: &Isometry3<f64>,
    alignment: &AlignmentResult,
    rotated: &[f32],
) -> SdfSampleField {
    let window = ctx.points.window();
    let mut values = vec![sdf.d_far(); window.iter().product()];
    ctx.sample(sdf, pose, alignment, rotated, |_, cell, v| {
        values[linear_index(window, cell.map(|c| c as usize))] = v;
    });
    SdfSampleField {
        anchor: alignment.anchor,
        window,
        values,
    }
}

/// Rotations handed to the provider per call.
pub(crate) const PROVIDER_BLOCK: usize = 32;

/// All `C x L` placements in one call, ordered `[configuration][link]` with
/// links in the order of `sdfs`. Each field's pose is looked up by
/// [`LinkSdf::link_id`].
pub fn place_links_batch(
    sdfs: &[LinkSdf],
    poses: &LinkPoseBatch,
    grid: &EnvGrid,
    points: &CanonicalPoints,
    provider: &dyn TransformProvider,
    exec: Exec,
) -> Result<Vec<SdfSampleField>> {
    let refs: Vec<&LinkSdf> = sdfs.iter().collect();
    let ctx = PlacementContext::new(&refs, grid, points, provider)?;
    let nl = sdfs.len();
    let total = poses.configs() * nl;
    let pose_of = |n: usize| poses.get(n / nl, sdfs[n % nl].link_id() as usize);

    let alignments = (0..total)
        .map(|n| compute_alignment(&pose_of(n).translation.vector, grid, ctx.extent_r))
        .collect::<Result<Vec<_>>>()?;

    let blocks = total.div_ceil(PROVIDER_BLOCK);
    let stride = 3 * points.len();
    let fields: Vec<Vec<SdfSampleField>> = par::map_range(exec, blocks, |b| {
        let range = b * PROVIDER_BLOCK..((b + 1) * PROVIDER_BLOCK).min(total);
        let rotations: Vec<Matrix3<f64>> = range
            .clone()
            .map(|n| pose_of(n).rotation.to_rotation_matrix().into_inner())
            .collect();
        let mut rotated = vec![0f32; stride * rotations.len()];
        provider.rotate_batch(&rotations, &mut rotated);
        range
            .zip(rotated.chunks_exact(stride))
            .map(|(n, rot)| sample_field(&ctx, &sdfs[n % nl], pose_of(n), &alignments[n], rot))
            .collect()
    });
    Ok(fields.into_iter().flatten().collect())
}
