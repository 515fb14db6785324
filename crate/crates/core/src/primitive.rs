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
//! Analytic signed distances for the primitive shapes a link may use instead
//! of a mesh. Every shape is centred on its own origin; capsules run along `z`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { radius: f64 },
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: [f64; 3] },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Sphere { radius } => *radius > 0.0,
            Primitive::Capsule {
                radius,
                half_length,
            } => *radius > 0.0 && *half_length >= 0.0,
            Primitive::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("degenerate primitive {self:?}")))
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Capsule {
                radius,
                half_length,
            } => {
                let z = p.z.clamp(-half_length, *half_length);
                (p - Vector3::new(0.0, 0.0, z)).norm() - radius
            }
            Primitive::Box { half_extents } => {
                let q = Vector3::from_fn(|a, _| p[a].abs() - half_extents[a]);
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
        }
    }

    /// Radius of the smallest origin-centred ball containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Primitive::Sphere { radius } => *radius,
            Primitive::Capsule {
                radius,
                half_length,
            } => half_length + radius,
            Primitive::Box { half_extents } => Vector3::from(*half_extents).norm(),
        }
    }

    /// Roughly `n` points on the surface (plus box corners).
    ///
    /// Every primitive is convex and contains its origin, so each sample is
    /// found by bisecting the distance along a ray from the origin.
    pub fn surface_samples(&self, n: usize) -> Vec<Vector3<f64>> {
        let reach = self.bounding_radius() * 1.01 + 1e-9;
        let mut out: Vec<_> = fibonacci_directions(n)
            .into_iter()
            .map(|d| {
                let (mut lo, mut hi) = (0.0, reach);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.signed_distance(&(d * mid)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                d * (0.5 * (lo + hi))
            })
            .collect();
        if let Primitive::Box { half_extents: h } = self {
            for k in 0..8 {
                let s = |a: usize| if k >> a & 1 == 0 { -h[a] } else { h[a] };
                out.push(Vector3::new(s(0), s(1), s(2)));
            }
        }
        out
    }
}

/// Near-uniform unit directions on a golden-angle spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let n = n.max(1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_examples() {
        let s = Primitive::Sphere { radius: 0.1 };
        assert_abs_diff_eq!(s.signed_distance(&Vector3::new(0.3, 0.0, 0.0)), 0.2, epsilon = 1e-12);
        let c = Primitive::Capsule {
            radius: 0.05,
            half_length: 0.2,
        };
        assert_abs_diff_eq!(c.signed_distance(&Vector3::new(0.0, 0.0, 0.4)), 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(c.signed_distance(&Vector3::new(0.3, 0.0, 0.1)), 0.25, epsilon = 1e-12);
        let b = Primitive::Box {
            half_extents: [0.1; 3],
        };
        assert_abs_diff_eq!(
            b.signed_distance(&Vector3::new(0.2, 0.2, 0.2)),
            3f64.sqrt() * 0.1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(b.signed_distance(&Vector3::zeros()), -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.signed_distance(&Vector3::zeros()), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        for p in [
            Primitive::Sphere { radius: 0.2 },
            Primitive::Capsule {
                radius: 0.05,
                half_length: 0.1,
            },
            Primitive::Box {
                half_extents: [0.1, 0.2, 0.05],
            },
        ] {
            let samples = p.surface_samples(200);
            assert!(samples.len() >= 200);
            for s in samples {
                assert!(p.signed_distance(&s).abs() < 1e-9, "{p:?} {s}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(Primitive::Sphere { radius: 0.0 }.validate().is_err());
        assert!(Primitive::Box {
            half_extents: [0.1, -0.1, 0.1]
        }
        .validate()
        .is_err());
        assert!(Primitive::Capsule {
            radius: 0.1,
            half_length: 0.0
        }
        .validate()
        .is_ok());
    }
}
