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
//! Voxel-grid geometry and the dense field containers shared by the pipeline.
//!
//! Storage is row-major with `x` varying fastest. Distances are `f32`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Integer voxel coordinate, one entry per axis.
pub type VoxelIndex = [usize; 3];

const DIVISIBILITY_TOL: f64 = 1e-6;

/// Returns `round(len / step)` if `len` is an integer multiple of `step`.
pub(crate) fn exact_ratio(len: f64, step: f64) -> Option<usize> {
    if !(len > 0.0 && step > 0.0 && len.is_finite() && step.is_finite()) {
        return None;
    }
    let n = len / step;
    let rounded = n.round();
    if rounded >= 1.0 && (n - rounded).abs() <= DIVISIBILITY_TOL * rounded.max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}

#[inline]
pub(crate) fn linear_index(dims: [usize; 3], j: VoxelIndex) -> usize {
    j[0] + dims[0] * (j[1] + dims[1] * j[2])
}

#[inline]
pub(crate) fn unravel(dims: [usize; 3], lin: usize) -> VoxelIndex {
    let x = lin % dims[0];
    let rest = lin / dims[0];
    [x, rest % dims[1], rest / dims[1]]
}

/// Axis-aligned environment voxel grid spanning `[-extent, +extent)` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvGrid {
    extent: Vector3<f64>,
    resolution: Vector3<f64>,
    dims: [usize; 3],
}

impl EnvGrid {
    /// `extent` is the half-extent per axis; `2 * extent` must be a whole
    /// number of `resolution`-sized voxels on every axis.
    pub fn new(extent: [f64; 3], resolution: [f64; 3]) -> Result<Self> {
        let mut dims = [0; 3];
        for a in 0..3 {
            dims[a] = exact_ratio(2.0 * extent[a], resolution[a]).ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "axis {a}: 2 * {} is not a positive multiple of {}",
                    extent[a], resolution[a]
                ))
            })?;
        }
        Ok(Self {
            extent: Vector3::from(extent),
            resolution: Vector3::from(resolution),
            dims,
        })
    }

    pub fn cubic(extent: f64, resolution: f64) -> Result<Self> {
        Self::new([extent; 3], [resolution; 3])
    }

    pub fn extent(&self) -> &Vector3<f64> {
        &self.extent
    }

    pub fn resolution(&self) -> &Vector3<f64> {
        &self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn linear_index(&self, j: VoxelIndex) -> usize {
        linear_index(self.dims, j)
    }

    pub fn unravel(&self, lin: usize) -> VoxelIndex {
        unravel(self.dims, lin)
    }

    pub fn contains(&self, j: [i64; 3]) -> bool {
        (0..3).all(|a| j[a] >= 0 && (j[a] as u64) < self.dims[a] as u64)
    }

    /// Center of voxel `j`; `j` may lie outside the grid.
    pub fn center_of(&self, j: [i64; 3]) -> Vector3<f64> {
        Vector3::from_fn(|a, _| -self.extent[a] + (j[a] as f64 + 0.5) * self.resolution[a])
    }

    pub fn center(&self, j: VoxelIndex) -> Vector3<f64> {
        self.center_of([j[0] as i64, j[1] as i64, j[2] as i64])
    }

    /// Unbounded snap: the voxel whose half-open cell `[lo, lo + r)` holds `p`,
    /// and the residual `p - center` with every component in `[-r/2, r/2)`.
    pub fn locate(&self, p: &Vector3<f64>) -> ([i64; 3], Vector3<f64>) {
        let mut j = [0i64; 3];
        let mut residual = Vector3::zeros();
        for a in 0..3 {
            let r = self.resolution[a];
            let u = (p[a] + self.extent[a]) / r;
            let fl = u.floor();
            // u - floor(u) is exact, so the residual stays inside the half-open range
            // except for the final rounding of the product.
            let mut d = (u - fl - 0.5) * r;
            let half = 0.5 * r;
            if d >= half {
                d = half.next_down();
            }
            j[a] = fl as i64;
            residual[a] = d;
        }
        (j, residual)
    }

    /// Nearest voxel of `p`. Points on a face between two voxels snap to the
    /// voxel above the face (floor semantics).
    pub fn voxel_index_of(&self, p: &Vector3<f64>) -> Result<VoxelIndex> {
        let (j, _) = self.locate(p);
        if self.contains(j) {
            Ok([j[0] as usize, j[1] as usize, j[2] as usize])
        } else {
            Err(Error::OutOfBounds {
                x: p.x,
                y: p.y,
                z: p.z,
            })
        }
    }
}

/// Dense signed distance grid of one link, expressed in the link frame.
///
/// Cell `j` is centred at `-extent + (j + 0.5) * resolution`. Values are
/// negative inside the link surface.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSdf {
    link_id: u32,
    dims: [usize; 3],
    extent: [f32; 3],
    resolution: [f32; 3],
    values: Vec<f32>,
}

impl LinkSdf {
    pub fn new(
        link_id: u32,
        dims: [usize; 3],
        extent: [f32; 3],
        resolution: [f32; 3],
        values: Vec<f32>,
    ) -> Result<Self> {
        for a in 0..3 {
            let n = exact_ratio(2.0 * extent[a] as f64, resolution[a] as f64);
            if n != Some(dims[a]) {
                return Err(Error::InvalidGrid(format!(
                    "link {link_id} axis {a}: {} cells of {} do not span 2 * {}",
                    dims[a], resolution[a], extent[a]
                )));
            }
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "link {link_id}: {} values for {expected} cells",
                values.len()
            )));
        }
        Ok(Self {
            link_id,
            dims,
            extent,
            resolution,
            values,
        })
    }

    /// Fills every cell with `f(cell_center)`.
    pub fn from_fn<F>(link_id: u32, extent: f64, resolution: f64, exec: Exec, f: F) -> Result<Self>
    where
        F: Fn(&Vector3<f64>) -> f32 + Sync + Send,
    {
        let n = exact_ratio(2.0 * extent, resolution).ok_or_else(|| {
            Error::InvalidGrid(format!(
                "link {link_id}: 2 * {extent} is not a multiple of {resolution}"
            ))
        })?;
        let dims = [n; 3];
        let extent32 = [extent as f32; 3];
        let res32 = [resolution as f32; 3];
        // Centres use the stored f32 metadata so a reloaded cache reproduces them.
        let geom = CellGeometry::new(extent32, res32);
        let plane = n * n;
        let mut values = vec![0f32; plane * n];
        par::for_each_chunk_mut(exec, &mut values, plane, |z, slab| {
            for y in 0..n {
                for x in 0..n {
                    slab[x + n * y] = f(&geom.center([x, y, z]));
                }
            }
        });
        Self::new(link_id, dims, extent32, res32, values)
    }

    pub fn link_id(&self) -> u32 {
        self.link_id
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn extent(&self) -> [f32; 3] {
        self.extent
    }

    pub fn resolution(&self) -> [f32; 3] {
        self.resolution
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, j: VoxelIndex) -> f32 {
        self.values[linear_index(self.dims, j)]
    }

    pub fn cell_center(&self, j: VoxelIndex) -> Vector3<f64> {
        CellGeometry::new(self.extent, self.resolution).center(j)
    }

    /// Sentinel returned past the stored grid: the smallest half-extent.
    pub fn d_far(&self) -> f32 {
        self.extent.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Trilinear interpolation at `q` (link frame, metres).
    ///
    /// Inside the outer half cell the nearest edge values are used; outside
    /// `[-extent, extent]` the result is [`LinkSdf::d_far`].
    pub fn sample(&self, q: &Vector3<f64>) -> f32 {
        let mut base = [0usize; 3];
        let mut next = [0usize; 3];
        let mut t = [0f32; 3];
        for a in 0..3 {
            let e = self.extent[a] as f64;
            let r = self.resolution[a] as f64;
            if !(q[a] >= -e && q[a] <= e) {
                return self.d_far();
            }
            let n = self.dims[a];
            let u = ((q[a] + e) / r - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (u as usize).min(n.saturating_sub(2));
            base[a] = i;
            next[a] = (i + 1).min(n - 1);
            t[a] = (u - i as f64) as f32;
        }
        let [nx, ny, _] = self.dims;
        let at = |x: usize, y: usize, z: usize| self.values[x + nx * (y + ny * z)];
        let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
        let (x0, x1) = (base[0], next[0]);
        let c00 = lerp(at(x0, base[1], base[2]), at(x1, base[1], base[2]), t[0]);
        let c10 = lerp(at(x0, next[1], base[2]), at(x1, next[1], base[2]), t[0]);
        let c01 = lerp(at(x0, base[1], next[2]), at(x1, base[1], next[2]), t[0]);
        let c11 = lerp(at(x0, next[1], next[2]), at(x1, next[1], next[2]), t[0]);
        let c0 = lerp(c00, c10, t[1]);
        let c1 = lerp(c01, c11, t[1]);
        lerp(c0, c1, t[2])
    }

    /// Values of the (up to) eight cells surrounding `q`, for bounds checks.
    pub fn neighborhood(&self, q: &Vector3<f64>) -> Option<[f32; 8]> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let e = self.extent[a] as f64;
            let r = self.resolution[a] as f64;
            if !(q[a] >= -e && q[a] <= e) {
                return None;
            }
            let n = self.dims[a];
            let u = ((q[a] + e) / r - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (u as usize).min(n.saturating_sub(2));
            lo[a] = i;
            hi[a] = (i + 1).min(n - 1);
        }
        let mut out = [0f32; 8];
        for (k, o) in out.iter_mut().enumerate() {
            let pick = |a: usize| if k >> a & 1 == 0 { lo[a] } else { hi[a] };
            *o = self.value([pick(0), pick(1), pick(2)]);
        }
        Some(out)
    }
}

#[derive(Clone, Copy)]
struct CellGeometry {
    extent: [f64; 3],
    resolution: [f64; 3],
}

impl CellGeometry {
    fn new(extent: [f32; 3], resolution: [f32; 3]) -> Self {
        Self {
            extent: extent.map(f64::from),
            resolution: resolution.map(f64::from),
        }
    }

    fn center(&self, j: VoxelIndex) -> Vector3<f64> {
        Vector3::from_fn(|a, _| -self.extent[a] + (j[a] as f64 + 0.5) * self.resolution[a])
    }
}

/// A link field resampled onto an environment-aligned window of voxels.
///
/// Window cell `w` covers environment voxel `anchor + w`; cells that fall
/// outside the environment grid are dropped when merging.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfSampleField {
    pub anchor: [i64; 3],
    pub window: [usize; 3],
    pub values: Vec<f32>,
}

impl SdfSampleField {
    /// Value covering environment voxel `v`, if the window reaches it.
    pub fn value_at(&self, v: VoxelIndex) -> Option<f32> {
        let mut w = [0usize; 3];
        for a in 0..3 {
            let off = v[a] as i64 - self.anchor[a];
            if off < 0 || off >= self.window[a] as i64 {
                return None;
            }
            w[a] = off as usize;
        }
        Some(self.values[linear_index(self.window, w)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn desk() -> EnvGrid {
        EnvGrid::cubic(1.0, 0.1).unwrap()
    }

    #[test]
    fn voxel_index_examples() {
        let g = desk();
        assert_eq!(g.dims(), [20, 20, 20]);
        assert_eq!(g.voxel_count(), 8000);
        let j = g.voxel_index_of(&Vector3::new(0.05, 0.05, 0.05)).unwrap();
        assert_eq!(j, [10, 10, 10]);
        let c = g.center(j);
        assert_abs_diff_eq!(c, Vector3::new(0.05, 0.05, 0.05), epsilon = 1e-12);
        assert_eq!(g.voxel_index_of(&Vector3::zeros()).unwrap(), [10, 10, 10]);
        assert!(matches!(
            g.voxel_index_of(&Vector3::new(1.2, 0.0, 0.0)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(g.voxel_index_of(&Vector3::new(1.0, 0.0, 0.0)).is_err());
        assert_eq!(g.voxel_index_of(&Vector3::new(-1.0, -1.0, -1.0)).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn rejects_indivisible_extent() {
        assert!(EnvGrid::cubic(1.0, 0.3).is_err());
        assert!(EnvGrid::new([1.0, 1.0, 1.0], [0.1, 0.0, 0.1]).is_err());
        assert!(EnvGrid::new([1.0, 0.5, 0.25], [0.1, 0.05, 0.05]).is_ok());
    }

    #[test]
    fn every_center_round_trips() {
        let g = EnvGrid::new([1.0, 0.6, 0.4], [0.04, 0.04, 0.02]).unwrap();
        for lin in 0..g.voxel_count() {
            let j = g.unravel(lin);
            assert_eq!(g.linear_index(j), lin);
            assert_eq!(g.voxel_index_of(&g.center(j)).unwrap(), j);
        }
    }

    fn two_cell_sdf(a: f32, b: f32) -> LinkSdf {
        // 2 x 1 x 1 cells, 0.1 m each.
        LinkSdf::new(0, [2, 1, 1], [0.1, 0.05, 0.05], [0.1, 0.1, 0.1], vec![a, b]).unwrap()
    }

    #[test]
    fn trilinear_examples() {
        let sdf = two_cell_sdf(0.10, 0.20);
        let c0 = sdf.cell_center([0, 0, 0]);
        let c1 = sdf.cell_center([1, 0, 0]);
        assert_abs_diff_eq!(sdf.sample(&c0), 0.10, epsilon = 1e-7);
        assert_abs_diff_eq!(sdf.sample(&c1), 0.20, epsilon = 1e-7);
        assert_abs_diff_eq!(sdf.sample(&((c0 + c1) * 0.5)), 0.15, epsilon = 1e-7);
        assert_eq!(sdf.sample(&Vector3::new(10.0 * 0.1, 0.0, 0.0)), sdf.d_far());
        assert_eq!(sdf.d_far(), 0.05);
        assert_eq!(sdf.sample(&Vector3::new(f64::NAN, 0.0, 0.0)), sdf.d_far());
    }

    #[test]
    fn from_fn_matches_centres() {
        let sdf = LinkSdf::from_fn(3, 0.2, 0.05, Exec::default(), |p| p.norm() as f32).unwrap();
        assert_eq!(sdf.dims(), [8, 8, 8]);
        for (lin, v) in sdf.values().iter().enumerate() {
            let j = unravel(sdf.dims(), lin);
            assert_eq!(*v, sdf.cell_center(j).norm() as f32);
        }
        let seq = LinkSdf::from_fn(3, 0.2, 0.05, Exec::Sequential, |p| p.norm() as f32).unwrap();
        assert_eq!(seq, sdf);
    }

    #[test]
    fn link_sdf_rejects_bad_shapes() {
        assert!(LinkSdf::new(0, [2, 1, 1], [0.1, 0.05, 0.05], [0.1; 3], vec![0.0]).is_err());
        assert!(LinkSdf::new(0, [3, 1, 1], [0.1, 0.05, 0.05], [0.1; 3], vec![0.0; 3]).is_err());
    }

    #[test]
    fn sample_field_lookup() {
        let f = SdfSampleField {
            anchor: [-1, 0, 2],
            window: [2, 2, 2],
            values: (0..8).map(|v| v as f32).collect(),
        };
        assert_eq!(f.value_at([0, 0, 2]), Some(1.0));
        assert_eq!(f.value_at([0, 1, 3]), Some(7.0));
        assert_eq!(f.value_at([1, 0, 2]), None);
        assert_eq!(f.value_at([0, 0, 1]), None);
    }

    fn random_sdf(seed: u64) -> LinkSdf {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..6 * 6 * 6).map(|_| rng.random_range(-0.2f32..0.4)).collect();
        LinkSdf::new(1, [6; 3], [0.3; 3], [0.1; 3], values).unwrap()
    }

    proptest! {
        #[test]
        fn locate_residual_in_half_open_range(x in -1.5f64..1.5, y in -1.5f64..1.5, z in -1.5f64..1.5) {
            let g = EnvGrid::cubic(1.0, 0.04).unwrap();
            let p = Vector3::new(x, y, z);
            let (j, d) = g.locate(&p);
            for a in 0..3 {
                let half = 0.5 * g.resolution()[a];
                prop_assert!(d[a] >= -half && d[a] < half);
            }
            let back = g.center_of(j) + d;
            prop_assert!((back - p).amax() <= 1e-12);
        }

        #[test]
        fn sample_bounded_by_neighbours(seed in 0u64..64, x in -0.3f64..0.3, y in -0.3f64..0.3, z in -0.3f64..0.3) {
            let sdf = random_sdf(seed);
            let q = Vector3::new(x, y, z);
            let n = sdf.neighborhood(&q).unwrap();
            let lo = n.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = n.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let s = sdf.sample(&q);
            prop_assert!(s >= lo - 1e-6 && s <= hi + 1e-6);
        }

        #[test]
        fn sample_is_lipschitz(seed in 0u64..16, x in -0.28f64..0.28, y in -0.28f64..0.28, z in -0.28f64..0.28,
                               dx in -1e-3f64..1e-3, dy in -1e-3f64..1e-3, dz in -1e-3f64..1e-3) {
            let sdf = random_sdf(seed);
            // Per-axis slope is bounded by the largest neighbour difference over spacing.
            let mut lip = 0f64;
            let [nx, ny, nz] = sdf.dims();
            for z in 0..nz { for y in 0..ny { for x in 0..nx {
                let v = sdf.value([x, y, z]) as f64;
                if x + 1 < nx { lip = lip.max((sdf.value([x + 1, y, z]) as f64 - v).abs() / 0.1); }
                if y + 1 < ny { lip = lip.max((sdf.value([x, y + 1, z]) as f64 - v).abs() / 0.1); }
                if z + 1 < nz { lip = lip.max((sdf.value([x, y, z + 1]) as f64 - v).abs() / 0.1); }
            }}}
            let p = Vector3::new(x, y, z);
            let d = Vector3::new(dx, dy, dz);
            let diff = (sdf.sample(&(p + d)) - sdf.sample(&p)).abs() as f64;
            prop_assert!(diff <= lip * d.lp_norm(1) + 1e-5);
        }
    }
}
