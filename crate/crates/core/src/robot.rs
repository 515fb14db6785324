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
//! Articulated robot description and batched forward kinematics.
//!
//! Robots are described by a small JSON document:
//!
//! ```json
//! {
//!   "name": "arm",
//!   "link_reach": 0.3,
//!   "links": [
//!     { "name": "base" },
//!     { "name": "upper",
//!       "collision": { "origin": { "xyz": [0, 0, 0.1] },
//!                      "geometry": { "type": "capsule", "radius": 0.05, "half_length": 0.1 } } }
//!   ],
//!   "joints": [
//!     { "name": "j1", "type": "revolute", "parent": "base", "child": "upper",
//!       "axis": [0, 0, 1], "origin": { "xyz": [0, 0, 0.05] } }
//!   ],
//!   "limits": { "j1": { "lower": -3.14, "upper": 3.14, "velocity": 2.0, "acceleration": 10.0 } }
//! }
//! ```
//!
//! Mesh geometry (`{"type": "mesh", "path": "meshes/upper.stl"}`) is resolved
//! relative to the JSON file.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::par::{self, Exec};
use crate::primitive::Primitive;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseDescription {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl PoseDescription {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.xyz)),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GeometryDescription {
    Sphere { radius: f64 },
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: [f64; 3] },
    Mesh { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionDescription {
    #[serde(default)]
    pub origin: PoseDescription,
    pub geometry: GeometryDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereDescription {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDescription {
    pub name: String,
    #[serde(default)]
    pub collision: Option<CollisionDescription>,
    /// Optional covering spheres for the sphere-model baseline.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spheres: Vec<SphereDescription>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDescription {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: PoseDescription,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDescription {
    #[serde(default)]
    pub name: String,
    /// Largest distance from any link origin to that link's surface.
    pub link_reach: f64,
    pub links: Vec<LinkDescription>,
    #[serde(default)]
    pub joints: Vec<JointDescription>,
    #[serde(default)]
    pub limits: BTreeMap<String, JointLimits>,
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Primitive(Primitive),
    Mesh(Arc<TriangleMesh>),
}

/// Collision geometry placed in its link frame.
#[derive(Debug, Clone)]
pub struct Collision {
    pub origin: Isometry3<f64>,
    pub geometry: Geometry,
}

impl Collision {
    /// Signed distance at `p` given in the link frame. Open meshes yield
    /// unsigned distances.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let local = self.origin.inverse_transform_point(&(*p).into()).coords;
        match &self.geometry {
            Geometry::Primitive(prim) => prim.signed_distance(&local),
            Geometry::Mesh(mesh) => mesh
                .exact_point_distance(&local)
                .unwrap_or_else(|_| mesh.unsigned_distance(&local)),
        }
    }

    /// Points on the collision surface, in the link frame.
    pub fn surface_samples(&self, n: usize) -> Vec<Vector3<f64>> {
        let local = match &self.geometry {
            Geometry::Primitive(p) => p.surface_samples(n),
            Geometry::Mesh(m) => {
                let mut pts = m.vertices().to_vec();
                for t in m.triangles() {
                    let [a, b, c] = t.map(|i| m.vertices()[i as usize]);
                    pts.extend([(a + b + c) / 3.0, (a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5]);
                }
                pts
            }
        };
        local
            .into_iter()
            .map(|p| self.origin.transform_point(&p.into()).coords)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub id: u32,
    pub collision: Option<Collision>,
    pub spheres: Vec<SphereDescription>,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: usize,
    pub child: usize,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    pub limits: Option<JointLimits>,
    /// Column of this joint in a [`ConfigBatch`]; `None` for fixed joints.
    pub dof_index: Option<usize>,
}

impl Joint {
    fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis.into_inner() * q),
                UnitQuaternion::identity(),
            ),
            JointKind::Fixed => Isometry3::identity(),
        }
    }
}

/// Validated tree-structured robot. Joints are stored parent-before-child.
#[derive(Debug, Clone)]
pub struct RobotModel {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    root: usize,
    dof: usize,
    link_reach: f64,
}

impl RobotModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: RobotDescription =
            serde_json::from_str(&text).map_err(|e| Error::format("robot model", path, e))?;
        Self::from_description(&desc, path.parent())
    }

    /// Builds a model; relative mesh paths resolve against `base_dir`.
    pub fn from_description(desc: &RobotDescription, base_dir: Option<&Path>) -> Result<Self> {
        if desc.links.is_empty() {
            return Err(Error::InvalidModel("no links".into()));
        }
        if !(desc.link_reach >= 0.0) {
            return Err(Error::InvalidModel("link_reach must be non-negative".into()));
        }
        let mut by_name = HashMap::new();
        let mut links = Vec::with_capacity(desc.links.len());
        for (i, l) in desc.links.iter().enumerate() {
            if by_name.insert(l.name.clone(), i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate link {:?}", l.name)));
            }
            let collision = l
                .collision
                .as_ref()
                .map(|c| load_collision(c, base_dir))
                .transpose()?;
            if let Some(s) = l.spheres.iter().find(|s| !(s.radius > 0.0)) {
                return Err(Error::InvalidModel(format!(
                    "link {:?}: sphere radius {} must be positive",
                    l.name, s.radius
                )));
            }
            links.push(Link {
                name: l.name.clone(),
                id: i as u32,
                collision,
                spheres: l.spheres.clone(),
            });
        }

        let mut parent_of: Vec<Option<usize>> = vec![None; links.len()];
        let mut raw = Vec::with_capacity(desc.joints.len());
        for j in &desc.joints {
            let lookup = |n: &str| {
                by_name.get(n).copied().ok_or_else(|| {
                    Error::InvalidModel(format!("joint {:?} references unknown link {n:?}", j.name))
                })
            };
            let (parent, child) = (lookup(&j.parent)?, lookup(&j.child)?);
            if parent_of[child].replace(parent).is_some() {
                return Err(Error::InvalidModel(format!(
                    "link {:?} has more than one parent joint",
                    j.child
                )));
            }
            let axis = Vector3::from(j.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "joint {:?}: axis {:?} is not unit length",
                    j.name, j.axis
                )));
            }
            let limits = desc.limits.get(&j.name).copied();
            if j.kind != JointKind::Fixed {
                let l = limits.ok_or_else(|| {
                    Error::InvalidModel(format!("joint {:?} has no limits", j.name))
                })?;
                if !(l.velocity > 0.0 && l.acceleration > 0.0) || !(l.lower <= l.upper) {
                    return Err(Error::InvalidModel(format!(
                        "joint {:?}: invalid limits {l:?}",
                        j.name
                    )));
                }
            }
            raw.push(Joint {
                name: j.name.clone(),
                kind: j.kind,
                parent,
                child,
                axis: Unit::new_unchecked(axis),
                origin: j.origin.to_isometry(),
                limits,
                dof_index: None,
            });
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_of[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidModel(format!(
                "expected exactly one root link, found {}",
                roots.len()
            )));
        }
        let root = roots[0];

        // Breadth-first from the root; anything unreached sits on a cycle.
        let mut order = Vec::with_capacity(raw.len());
        let mut frontier = vec![root];
        let mut placed = vec![false; raw.len()];
        while let Some(link) = frontier.pop() {
            for (k, j) in raw.iter().enumerate() {
                if !placed[k] && j.parent == link {
                    placed[k] = true;
                    order.push(k);
                    frontier.push(j.child);
                }
            }
        }
        if order.len() != raw.len() {
            return Err(Error::InvalidModel("joint graph contains a cycle".into()));
        }
        // DoF columns follow declaration order.
        let mut dof = 0;
        for j in raw.iter_mut() {
            if j.kind != JointKind::Fixed {
                j.dof_index = Some(dof);
                dof += 1;
            }
        }
        let joints = order.into_iter().map(|k| raw[k].clone()).collect();
        Ok(Self {
            name: desc.name.clone(),
            links,
            joints,
            root,
            dof,
            link_reach: desc.link_reach,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn link_reach(&self) -> f64 {
        self.link_reach
    }

    /// Links that carry collision geometry.
    pub fn collision_links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(|l| l.collision.is_some())
    }

    /// Movable joints in configuration-column order.
    pub fn dof_joints(&self) -> Vec<&Joint> {
        let mut v: Vec<&Joint> = self.joints.iter().filter(|j| j.dof_index.is_some()).collect();
        v.sort_by_key(|j| j.dof_index);
        v
    }

    /// World pose of every link for one configuration.
    pub fn link_poses(&self, q: &[f64]) -> Vec<Isometry3<f64>> {
        let mut poses = vec![Isometry3::identity(); self.links.len()];
        self.link_poses_into(q, &mut poses);
        poses
    }

    fn link_poses_into(&self, q: &[f64], out: &mut [Isometry3<f64>]) {
        debug_assert_eq!(q.len(), self.dof);
        out[self.root] = Isometry3::identity();
        for j in &self.joints {
            let qj = j.dof_index.map_or(0.0, |d| q[d]);
            out[j.child] = out[j.parent] * j.origin * j.motion(qj);
        }
    }

    /// Every `(configuration, joint name)` outside its position limits.
    pub fn limit_violations(&self, batch: &ConfigBatch) -> Vec<(usize, String)> {
        let movable = self.dof_joints();
        let mut out = Vec::new();
        for c in 0..batch.len() {
            let row = batch.row(c);
            for j in &movable {
                let l = j.limits.expect("movable joints carry limits");
                let q = row[j.dof_index.unwrap()];
                if !(q >= l.lower && q <= l.upper) {
                    out.push((c, j.name.clone()));
                }
            }
        }
        out
    }

    pub fn forward_kinematics_batch(&self, batch: &ConfigBatch) -> Result<LinkPoseBatch> {
        self.forward_kinematics_batch_with(batch, Exec::default())
    }

    /// Link poses for every configuration of `batch`; identical to calling
    /// [`RobotModel::link_poses`] per row.
    pub fn forward_kinematics_batch_with(
        &self,
        batch: &ConfigBatch,
        exec: Exec,
    ) -> Result<LinkPoseBatch> {
        if batch.dof() != self.dof {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, robot has {} degrees of freedom",
                batch.dof(),
                self.dof
            )));
        }
        let violations = self.limit_violations(batch);
        if !violations.is_empty() {
            return Err(Error::LimitViolation(violations));
        }
        let nl = self.links.len();
        let mut poses = vec![Isometry3::identity(); batch.len() * nl];
        par::for_each_chunk_mut(exec, &mut poses, nl, |c, out| {
            self.link_poses_into(batch.row(c), out)
        });
        Ok(LinkPoseBatch {
            configs: batch.len(),
            links: nl,
            poses,
        })
    }

    /// Worst-case stopping time: the largest velocity-to-acceleration ratio.
    pub fn max_braking_time(&self) -> f64 {
        self.joints
            .iter()
            .filter(|j| j.kind != JointKind::Fixed)
            .filter_map(|j| j.limits)
            .map(|l| l.velocity / l.acceleration)
            .fold(0.0, f64::max)
    }

    /// Uniform random configurations within the position limits.
    pub fn random_configs<R: Rng>(&self, n: usize, rng: &mut R) -> ConfigBatch {
        let movable = self.dof_joints();
        let values = (0..n)
            .flat_map(|_| {
                movable
                    .iter()
                    .map(|j| {
                        let l = j.limits.unwrap();
                        if l.upper > l.lower {
                            rng.random_range(l.lower..=l.upper)
                        } else {
                            l.lower
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        ConfigBatch::new(self.dof, values).expect("shape is consistent")
    }
}

fn load_collision(c: &CollisionDescription, base_dir: Option<&Path>) -> Result<Collision> {
    let geometry = match &c.geometry {
        GeometryDescription::Sphere { radius } => Primitive::Sphere { radius: *radius }.into(),
        GeometryDescription::Capsule {
            radius,
            half_length,
        } => Primitive::Capsule {
            radius: *radius,
            half_length: *half_length,
        }
        .into(),
        GeometryDescription::Box { half_extents } => Primitive::Box {
            half_extents: *half_extents,
        }
        .into(),
        GeometryDescription::Mesh { path } => {
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            Geometry::Mesh(Arc::new(TriangleMesh::load(&full)?))
        }
    };
    if let Geometry::Primitive(p) = &geometry {
        p.validate()?;
    }
    Ok(Collision {
        origin: c.origin.to_isometry(),
        geometry,
    })
}

impl From<Primitive> for Geometry {
    fn from(p: Primitive) -> Self {
        Geometry::Primitive(p)
    }
}

/// Smallest half-extent a link window may use so that an obstacle moving at
/// `v_obs` is seen before the robot can stop.
pub fn required_extent(v_obs: f64, t_brake: f64, d_prot: f64, link_reach: f64) -> f64 {
    v_obs * t_brake + d_prot + link_reach
}

/// `C` joint configurations of a `D`-DoF robot, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigBatch {
    dof: usize,
    values: Vec<f64>,
}

impl ConfigBatch {
    pub fn new(dof: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || (dof > 0 && !values.len().is_multiple_of(dof)) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of {dof}",
                values.len()
            )));
        }
        Ok(Self { dof, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dof = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dof) {
            return Err(Error::DimensionMismatch("ragged configuration rows".into()));
        }
        Self::new(dof, rows.concat())
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dof.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.values[c * self.dof..(c + 1) * self.dof]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Link poses for a batch, indexed `[configuration][link]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPoseBatch {
    configs: usize,
    links: usize,
    poses: Vec<Isometry3<f64>>,
}

impl LinkPoseBatch {
    /// Wraps `configs * links` poses stored configuration-major.
    pub fn from_poses(configs: usize, links: usize, poses: Vec<Isometry3<f64>>) -> Self {
        assert_eq!(poses.len(), configs * links, "pose count");
        Self {
            configs,
            links,
            poses,
        }
    }

    pub fn configs(&self) -> usize {
        self.configs
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn get(&self, config: usize, link: usize) -> &Isometry3<f64> {
        &self.poses[config * self.links + link]
    }

    pub fn config(&self, config: usize) -> &[Isometry3<f64>] {
        &self.poses[config * self.links..(config + 1) * self.links]
    }
}
