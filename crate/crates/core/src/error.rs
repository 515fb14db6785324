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
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point ({x}, {y}, {z}) lies outside the environment grid")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("link window of extent {extent} does not divide into voxels of {resolution} on axis {axis}: {reason}")]
    Window {
        axis: usize,
        extent: f64,
        resolution: f64,
        reason: &'static str,
    },

    #[error("window anchored at {anchor:?} does not overlap the environment grid")]
    NoOverlap { anchor: [i64; 3] },

    #[error("mesh is not watertight; signed distances are undefined")]
    NonWatertight,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("configuration batch violates joint limits at {}", fmt_violations(.0))]
    LimitViolation(Vec<(usize, String)>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("obstacle set was voxelized on a different grid")]
    GridMismatch,

    #[error("approximator reached max error {achieved:.6}, target was {target:.6}")]
    NotConverged { achieved: f64, target: f64 },

    #[error("robot fields need {required} bytes, above the {limit} byte limit")]
    MemoryLimit { required: u64, limit: u64 },

    #[error("invalid {what} file {path:?}: {reason}")]
    Format {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("{path:?} already exists")]
    AlreadyExists { path: PathBuf },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad inputs rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NotConverged { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            what,
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

fn fmt_violations(v: &[(usize, String)]) -> String {
    const SHOWN: usize = 8;
    let mut s = v
        .iter()
        .take(SHOWN)
        .map(|(c, j)| format!("(config {c}, joint {j})"))
        .collect::<Vec<_>>()
        .join(", ");
    if v.len() > SHOWN {
        s.push_str(&format!(" and {} more", v.len() - SHOWN));
    }
    s
}
