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
//! Offline construction of link-local signed distance fields.

use nalgebra::{Isometry3, Vector3};

use crate::error::{Error, Result};
use crate::grid::LinkSdf;
use crate::mesh::TriangleMesh;
use crate::par::Exec;
use crate::primitive::Primitive;
use crate::robot::{Collision, Geometry, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// Negative inside; requires a watertight mesh.
    Signed,
    Unsigned,
}

/// Exact distance to `mesh` at every cell centre. The mesh is given in the
/// link frame.
pub fn build_link_sdf(
    mesh: &TriangleMesh,
    link_id: u32,
    extent: f64,
    resolution: f64,
    sign: SignMode,
    exec: Exec,
) -> Result<LinkSdf> {
    if sign == SignMode::Signed && !mesh.is_watertight() {
        return Err(Error::NonWatertight);
    }
    LinkSdf::from_fn(link_id, extent, resolution, exec, |p| match sign {
        SignMode::Signed => mesh
            .exact_point_distance(p)
            .expect("watertightness checked above") as f32,
        SignMode::Unsigned => mesh.unsigned_distance(p) as f32,
    })
}

/// Analytic field of a primitive placed at `origin` in the link frame.
pub fn build_primitive_sdf(
    shape: &Primitive,
    origin: &Isometry3<f64>,
    link_id: u32,
    extent: f64,
    resolution: f64,
    exec: Exec,
) -> Result<LinkSdf> {
    shape.validate()?;
    LinkSdf::from_fn(link_id, extent, resolution, exec, |p| {
        let local = origin.inverse_transform_point(&(*p).into()).coords;
        shape.signed_distance(&local) as f32
    })
}

/// Field for one link's collision geometry. Open meshes fall back to
/// unsigned distances with a warning.
pub fn build_collision_sdf(
    collision: &Collision,
    link_id: u32,
    extent: f64,
    resolution: f64,
    exec: Exec,
) -> Result<LinkSdf> {
    match &collision.geometry {
        Geometry::Primitive(p) => {
            build_primitive_sdf(p, &collision.origin, link_id, extent, resolution, exec)
        }
        Geometry::Mesh(mesh) => {
            let sign = if mesh.is_watertight() {
                SignMode::Signed
            } else {
                log::warn!("link {link_id}: mesh is open, storing unsigned distances");
                SignMode::Unsigned
            };
            let placed = mesh.transformed(&collision.origin);
            build_link_sdf(&placed, link_id, extent, resolution, sign, exec)
        }
    }
}

/// One field per collision link, ordered as [`RobotModel::collision_links`].
pub fn build_robot_link_sdfs(
    model: &RobotModel,
    extent: f64,
    resolution: f64,
    exec: Exec,
) -> Result<Vec<LinkSdf>> {
    model
        .collision_links()
        .map(|l| {
            build_collision_sdf(
                l.collision.as_ref().unwrap(),
                l.id,
                extent,
                resolution,
                exec,
            )
        })
        .collect()
}

/// Largest distance from the link origin to its collision surface.
pub fn collision_reach(collision: &Collision) -> f64 {
    collision
        .surface_samples(512)
        .iter()
        .map(Vector3::norm)
        .fold(0.0, f64::max)
}
