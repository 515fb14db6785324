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
//! Triangle meshes and exact point-to-mesh signed distance.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::{Isometry3, Vector3};

use crate::error::{Error, Result};

/// Indexed triangle mesh. Vertices are welded by exact position and
/// zero-area triangles are dropped at construction.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    watertight: bool,
    // bounding sphere per triangle, for pruning
    bounds: Vec<(Vector3<f64>, f64)>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= vertices.len()))
        {
            return Err(Error::InvalidMesh(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }

        let mut welded: Vec<Vector3<f64>> = Vec::with_capacity(vertices.len());
        let mut lookup: HashMap<[u64; 3], u32> = HashMap::new();
        let remap: Vec<u32> = vertices
            .iter()
            .map(|v| {
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *lookup.entry(key).or_insert_with(|| {
                    welded.push(*v);
                    (welded.len() - 1) as u32
                })
            })
            .collect();

        let diag = bbox_diagonal(&welded);
        let area_eps = 1e-12 * diag * diag;
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .map(|t| t.map(|i| remap[i as usize]))
            .filter(|t| {
                let [a, b, c] = t.map(|i| welded[i as usize]);
                (b - a).cross(&(c - a)).norm() * 0.5 > area_eps
            })
            .collect();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no non-degenerate triangles".into()));
        }

        let watertight = is_closed(&triangles);
        let bounds = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| welded[i as usize]);
                let centroid = (a + b + c) / 3.0;
                let r = [a, b, c]
                    .iter()
                    .map(|v| (v - centroid).norm())
                    .fold(0.0, f64::max);
                (centroid, r)
            })
            .collect();
        Ok(Self {
            vertices: welded,
            triangles,
            watertight,
            bounds,
        })
    }

    /// Loads a binary/ASCII STL or a Wavefront OBJ, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("stl") => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                let mesh = stl_io::read_stl(&mut BufReader::new(file))
                    .map_err(|e| Error::format("STL", path, e))?;
                let vertices = mesh
                    .vertices
                    .iter()
                    .map(|v| Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64))
                    .collect();
                let triangles = mesh
                    .faces
                    .iter()
                    .map(|f| f.vertices.map(|i| i as u32))
                    .collect();
                Self::new(vertices, triangles)
            }
            Some("obj") => {
                let opts = tobj::LoadOptions {
                    triangulate: true,
                    ..Default::default()
                };
                let (models, _) =
                    tobj::load_obj(path, &opts).map_err(|e| Error::format("OBJ", path, e))?;
                let mut vertices = Vec::new();
                let mut triangles = Vec::new();
                for m in models {
                    let base = vertices.len() as u32;
                    vertices.extend(m.mesh.positions.chunks_exact(3).map(|p| {
                        Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
                    }));
                    triangles.extend(
                        m.mesh
                            .indices
                            .chunks_exact(3)
                            .map(|t| [base + t[0], base + t[1], base + t[2]]),
                    );
                }
                Self::new(vertices, triangles)
            }
            _ => Err(Error::format(
                "mesh",
                path,
                "expected a .stl or .obj extension",
            )),
        }
    }

    /// Axis-aligned box centred at the origin, outward winding.
    pub fn cuboid(half: [f64; 3]) -> Self {
        let v = (0..8)
            .map(|k| {
                Vector3::new(
                    if k & 1 == 0 { -half[0] } else { half[0] },
                    if k & 2 == 0 { -half[1] } else { half[1] },
                    if k & 4 == 0 { -half[2] } else { half[2] },
                )
            })
            .collect();
        let t = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        Self::new(v, t).expect("cuboid is valid")
    }

    /// Icosahedron subdivided `levels` times and projected onto a sphere
    /// (`20 * 4^levels` faces).
    pub fn icosphere(radius: f64, levels: u32) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
            (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
            (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..levels {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            faces = faces
                .iter()
                .flat_map(|&[a, b, c]| {
                    let ab = midpoint(a, b, &mut verts);
                    let bc = midpoint(b, c, &mut verts);
                    let ca = midpoint(c, a, &mut verts);
                    [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
                })
                .collect();
        }
        let verts = verts.into_iter().map(|v| v * radius).collect();
        Self::new(verts, faces).expect("icosphere is valid")
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| iso.transform_point(&(*v).into()).coords)
            .collect();
        Self::new(vertices, self.triangles.clone()).expect("rigid motion keeps the mesh valid")
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Radius of the smallest origin-centred ball containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Minimum distance from `p` to any triangle.
    pub fn unsigned_distance(&self, p: &Vector3<f64>) -> f64 {
        // Seed with the triangle whose bounding sphere is nearest, then skip
        // every triangle whose sphere cannot beat the running best.
        let lower: Vec<f64> = self
            .bounds
            .iter()
            .map(|(c, r)| (p - c).norm() - r)
            .collect();
        let seed = lower
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let [a, b, c] = self.corners(seed);
        let mut best = (p - closest_point_on_triangle(p, &a, &b, &c)).norm();
        for (t, lb) in lower.iter().enumerate() {
            if *lb >= best || t == seed {
                continue;
            }
            let [a, b, c] = self.corners(t);
            best = best.min((p - closest_point_on_triangle(p, &a, &b, &c)).norm());
        }
        best
    }

    /// Ray-parity inside test, majority vote over three skew directions.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.577_350_269_189_625_8, 0.577_350_269_189_625_7, 0.577_350_269_189_626],
            [-0.2672612419124244, 0.5345224838248488, 0.8017837257372731],
            [0.8164965809277261, -0.4082482904638631, 0.4082482904638629],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| {
                let dir = Vector3::from(**d);
                let hits = (0..self.triangles.len())
                    .filter(|&t| {
                        let [a, b, c] = self.corners(t);
                        ray_hits_triangle(p, &dir, &a, &b, &c)
                    })
                    .count();
                hits % 2 == 1
            })
            .count();
        votes >= 2
    }

    /// Signed distance, negative inside. Requires a watertight mesh.
    pub fn exact_point_distance(&self, p: &Vector3<f64>) -> Result<f64> {
        if !self.watertight {
            return Err(Error::NonWatertight);
        }
        let d = self.unsigned_distance(p);
        Ok(if self.contains(p) { -d } else { d })
    }
}

fn bbox_diagonal(v: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in v {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if v.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

fn is_closed(triangles: &[[u32; 3]]) -> bool {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    edges.values().all(|&n| n == 2)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn ray_hits_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-15 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    inv * e2.dot(&q) > 0.0
}
