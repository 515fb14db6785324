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
//! # linksdf
//!
//! Batched minimum-distance queries between an articulated robot and voxelized
//! obstacles.
//!
//! Signed distance fields are computed once per robot link in the link's own
//! frame. For a trajectory of `C` waypoints, every link field is rotated,
//! snapped onto the environment voxel grid and min-merged into one dense
//! "robot field" per waypoint. At runtime a point cloud is voxelized and the
//! distance for every waypoint is a gather over the occupied voxels followed by
//! a `min` reduction.
//!
//! The rotation step can be served either by the exact matrix product or by a
//! tiny two-layer network ([`neural::TinyMlp`]) trained once per window size.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); every batched entry point also accepts an [`Exec`] so the
//! sequential path can be selected at runtime.

pub mod assembly;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod grid;
pub mod mesh;
pub mod neural;
mod par;
pub mod placement;
pub mod precompute;
pub mod primitive;
pub mod robot;

pub use crate::error::{Error, Result};
pub use crate::par::Exec;

pub use crate::assembly::{
    assemble_robot_sdfs, build_robot_sdfs, distances_along_trajectory, query_min_distances,
    sphere_baseline_distances, voxelize_pointcloud, CloudFrame, ObstacleVoxelSet, RobotSdfBatch,
    SphereRobotModel,
};
pub use crate::grid::{EnvGrid, LinkSdf, SdfSampleField, VoxelIndex};
pub use crate::mesh::TriangleMesh;
pub use crate::placement::{
    compute_alignment, AlignmentResult, CanonicalPoints, ExactProvider, GridTransform,
    TransformProvider,
};
pub use crate::primitive::Primitive;
pub use crate::robot::{ConfigBatch, LinkPoseBatch, RobotModel};
