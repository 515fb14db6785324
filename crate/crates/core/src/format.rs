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
//! On-disk formats. All binary formats are little-endian.
//!
//! * `LSDF` link field cache: magic, `u32` version, `3 x u32` cell counts,
//!   `3 x f32` half-extent, `3 x f32` resolution, `u32` link id, then the
//!   values as `f32` with x varying fastest.
//! * `TMLP` model: magic, `u32` version, `u32` hidden width, `u32` point
//!   count, then `W1 (9 x H)`, `b1`, `W2 (H x 3V)`, `b2` as `f32`.
//! * Point-cloud frame: `u32` point count followed by `x y z` `f32` triples.
//! * Cloud manifest: text, one `timestamp_ms,path` per line, paths relative
//!   to the manifest; blank lines and `#` comments are ignored.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use crate::assembly::CloudFrame;
use crate::error::{Error, Result};
use crate::grid::LinkSdf;
use crate::neural::TinyMlp;
use crate::robot::ConfigBatch;

pub const LSDF_MAGIC: &[u8; 4] = b"LSDF";
pub const LSDF_VERSION: u32 = 1;
pub const TMLP_MAGIC: &[u8; 4] = b"TMLP";
pub const TMLP_VERSION: u32 = 1;

/// Refuses absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 31;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Maps a decoding failure to a format error (truncation) or i/o error.
fn read_err<'a>(what: &'static str, path: &'a Path) -> impl Fn(io::Error) -> Error + 'a {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(what, path, "truncated")
        } else {
            Error::io(path, e)
        }
    }
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f32>> {
    let mut v = vec![0f32; n];
    r.read_f32_into::<LE>(&mut v)?;
    Ok(v)
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> io::Result<()> {
    v.iter().try_for_each(|x| w.write_f32::<LE>(*x))
}

fn expect_eof<R: Read>(r: &mut R, what: &'static str, path: &Path) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::format(what, path, "trailing bytes")),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4], what: &'static str, path: &Path) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(read_err(what, path))?;
    if &m != magic {
        return Err(Error::format(what, path, "bad magic"));
    }
    let version = r.read_u32::<LE>().map_err(read_err(what, path))?;
    let expected = if magic == LSDF_MAGIC { LSDF_VERSION } else { TMLP_VERSION };
    if version != expected {
        return Err(Error::format(what, path, format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_link_sdf(path: &Path, sdf: &LinkSdf) -> Result<()> {
    let mut w = create(path)?;
    let go = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_all(LSDF_MAGIC)?;
        w.write_u32::<LE>(LSDF_VERSION)?;
        for d in sdf.dims() {
            w.write_u32::<LE>(d as u32)?;
        }
        write_f32s(w, &sdf.extent())?;
        write_f32s(w, &sdf.resolution())?;
        w.write_u32::<LE>(sdf.link_id())?;
        write_f32s(w, sdf.values())?;
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_link_sdf(path: &Path) -> Result<LinkSdf> {
    const WHAT: &str = "LSDF";
    let mut r = open(path)?;
    check_magic(&mut r, LSDF_MAGIC, WHAT, path)?;
    let e = read_err(WHAT, path);
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = r.read_u32::<LE>().map_err(&e)? as usize;
    }
    let extent: [f32; 3] = read_f32s(&mut r, 3).map_err(&e)?.try_into().expect("3");
    let resolution: [f32; 3] = read_f32s(&mut r, 3).map_err(&e)?.try_into().expect("3");
    let link_id = r.read_u32::<LE>().map_err(&e)?;
    let n = dims.iter().map(|&d| d as u64).product::<u64>();
    if n == 0 || n > MAX_ELEMENTS {
        return Err(Error::format(WHAT, path, format!("bad dimensions {dims:?}")));
    }
    let values = read_f32s(&mut r, n as usize).map_err(&e)?;
    expect_eof(&mut r, WHAT, path)?;
    LinkSdf::new(link_id, dims, extent, resolution, values)
        .map_err(|err| Error::format(WHAT, path, err))
}

pub fn write_model(path: &Path, model: &TinyMlp) -> Result<()> {
    let mut w = create(path)?;
    let go = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_all(TMLP_MAGIC)?;
        w.write_u32::<LE>(TMLP_VERSION)?;
        w.write_u32::<LE>(model.hidden() as u32)?;
        w.write_u32::<LE>(model.num_points() as u32)?;
        write_f32s(w, model.w1())?;
        write_f32s(w, model.b1())?;
        write_f32s(w, &model.w2())?;
        write_f32s(w, model.b2())?;
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<TinyMlp> {
    const WHAT: &str = "TMLP";
    let mut r = open(path)?;
    check_magic(&mut r, TMLP_MAGIC, WHAT, path)?;
    let e = read_err(WHAT, path);
    let hidden = r.read_u32::<LE>().map_err(&e)? as usize;
    let points = r.read_u32::<LE>().map_err(&e)? as usize;
    if hidden == 0 || points == 0 || (hidden as u64) * 3 * (points as u64) > MAX_ELEMENTS {
        return Err(Error::format(WHAT, path, format!("bad shape {hidden} x {points}")));
    }
    let w1 = read_f32s(&mut r, 9 * hidden).map_err(&e)?;
    let b1 = read_f32s(&mut r, hidden).map_err(&e)?;
    let w2 = read_f32s(&mut r, hidden * 3 * points).map_err(&e)?;
    let b2 = read_f32s(&mut r, 3 * points).map_err(&e)?;
    expect_eof(&mut r, WHAT, path)?;
    TinyMlp::from_parts(hidden, points, w1, b1, &w2, b2).map_err(|err| Error::format(WHAT, path, err))
}

pub fn write_cloud_frame(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut w = create(path)?;
    let go = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_u32::<LE>(points.len() as u32)?;
        for p in points {
            for a in 0..3 {
                w.write_f32::<LE>(p[a] as f32)?;
            }
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_cloud_frame(path: &Path) -> Result<Vec<Vector3<f64>>> {
    const WHAT: &str = "point cloud";
    let mut r = open(path)?;
    let e = read_err(WHAT, path);
    let n = r.read_u32::<LE>().map_err(&e)? as u64;
    if 3 * n > MAX_ELEMENTS {
        return Err(Error::format(WHAT, path, format!("{n} points")));
    }
    let raw = read_f32s(&mut r, 3 * n as usize).map_err(&e)?;
    expect_eof(&mut r, WHAT, path)?;
    Ok(raw
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect())
}

/// `(timestamp_ms, frame path)` entries with paths resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(u64, PathBuf)>> {
    const WHAT: &str = "manifest";
    let base = path.parent().unwrap_or(Path::new(""));
    let r = open(path)?;
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (t, p) = line
            .split_once(',')
            .ok_or_else(|| Error::format(WHAT, path, format!("line {}: expected timestamp,path", i + 1)))?;
        let t = t
            .trim()
            .parse()
            .map_err(|_| Error::format(WHAT, path, format!("line {}: bad timestamp", i + 1)))?;
        out.push((t, base.join(p.trim())));
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[(u64, PathBuf)]) -> Result<()> {
    let mut w = create(path)?;
    let go = |w: &mut BufWriter<File>| -> io::Result<()> {
        for (t, p) in entries {
            writeln!(w, "{t},{}", p.display())?;
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

/// Lazily loads the frames listed in a manifest.
pub fn cloud_sequence(manifest: &Path) -> Result<impl Iterator<Item = Result<CloudFrame>>> {
    Ok(read_manifest(manifest)?.into_iter().map(|(t, p)| {
        Ok(CloudFrame {
            timestamp_ms: t,
            points: read_cloud_frame(&p)?,
        })
    }))
}

/// Joint positions, one configuration per row. A first row that does not
/// parse as numbers is treated as a header.
pub fn read_trajectory_csv(path: &Path) -> Result<ConfigBatch> {
    const WHAT: &str = "trajectory";
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::format(WHAT, path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(WHAT, path, e))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::format(WHAT, path, format!("row {}: not numeric", i + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::format(WHAT, path, "no configurations"));
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::format(WHAT, path, "non-finite joint value"));
    }
    ConfigBatch::from_rows(&rows).map_err(|e| Error::format(WHAT, path, e))
}

pub fn write_trajectory_csv(path: &Path, batch: &ConfigBatch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format("trajectory", path, e))?;
    let go = |w: &mut csv::Writer<File>| -> csv::Result<()> {
        w.write_record((0..batch.dof()).map(|j| format!("q{j}")))?;
        for c in 0..batch.len() {
            w.write_record(batch.row(c).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    };
    go(&mut w).map_err(|e| Error::format("trajectory", path, e))
}

/// Writes `timestamp_ms,d_0,...,d_{C-1}` rows.
pub fn write_distance_csv<W: Write>(out: W, configs: usize, rows: &[(u64, Vec<f32>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp_ms".to_string()];
    header.extend((0..configs).map(|c| format!("d_{c}")));
    w.write_record(&header)?;
    for (t, d) in rows {
        let mut rec = vec![t.to_string()];
        rec.extend(d.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
