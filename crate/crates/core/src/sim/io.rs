//! Trajectory container.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   "PGNTRAJ\x01"
//! hlen       u64       length of the JSON header
//! header     hlen      UTF-8 JSON (`FileHeader`)
//! masses     n  x f64
//! charges    n  x f64
//! positions  T*n*d x f64
//! velocities T*n*d x f64
//! accel      T*n*d x f64
//! labels     (only if header.has_labels) per step:
//!            E u64, receivers E x u32, senders E x u32,
//!            forces E*d x f64, potentials E x f64
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trajectory::{EdgeLabels, EdgeList, Trajectory, TrajectoryHeader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PGNTRAJ\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format_version: u32,
    #[serde(flatten)]
    header: TrajectoryHeader,
    has_labels: bool,
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let header = FileHeader {
        format_version: FORMAT_VERSION,
        header: traj.header.clone(),
        has_labels: traj.labels.is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_u64::<LittleEndian>(json.len() as u64)?;
    w.write_all(&json)?;
    write_f64s(&mut w, traj.masses.iter().copied())?;
    write_f64s(&mut w, traj.charges.iter().copied())?;
    write_f64s(&mut w, traj.positions.iter().copied())?;
    write_f64s(&mut w, traj.velocities.iter().copied())?;
    write_f64s(&mut w, traj.accelerations.iter().copied())?;
    if let Some(labels) = &traj.labels {
        for lab in labels {
            w.write_u64::<LittleEndian>(lab.edges.len() as u64)?;
            for &r in &lab.edges.receivers {
                w.write_u32::<LittleEndian>(r as u32)?;
            }
            for &s in &lab.edges.senders {
                w.write_u32::<LittleEndian>(s as u32)?;
            }
            write_f64s(&mut w, lab.forces.iter().copied())?;
            write_f64s(&mut w, lab.potentials.iter().copied())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<Trajectory> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("not a trajectory file (bad magic)"));
    }
    let hlen = r.read_u64::<LittleEndian>()? as usize;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json)?;
    let file_header: FileHeader = serde_json::from_slice(&json)?;
    if file_header.format_version != FORMAT_VERSION {
        return Err(Error::data(format!(
            "unsupported trajectory format version {}",
            file_header.format_version
        )));
    }
    let h = file_header.header;
    let (t, n, d) = (h.n_steps, h.n_particles, h.dim);
    let masses = read_f64s(&mut r, n)?;
    let charges = read_f64s(&mut r, n)?;
    let shape = (t, n, d);
    let to3 = |v: Vec<f64>| Array3::from_shape_vec(shape, v).map_err(|e| Error::data(e.to_string()));
    let positions = to3(read_f64s(&mut r, t * n * d)?)?;
    let velocities = to3(read_f64s(&mut r, t * n * d)?)?;
    let accelerations = to3(read_f64s(&mut r, t * n * d)?)?;
    let labels = if file_header.has_labels {
        let mut labels = Vec::with_capacity(t);
        for _ in 0..t {
            let e = r.read_u64::<LittleEndian>()? as usize;
            let mut idx = vec![0u32; 2 * e];
            r.read_u32_into::<LittleEndian>(&mut idx)?;
            let receivers = idx[..e].iter().map(|&x| x as usize).collect();
            let senders = idx[e..].iter().map(|&x| x as usize).collect();
            let forces = Array2::from_shape_vec((e, d), read_f64s(&mut r, e * d)?)
                .map_err(|e| Error::data(e.to_string()))?;
            let potentials = read_f64s(&mut r, e)?;
            labels.push(EdgeLabels {
                edges: EdgeList { receivers, senders },
                forces,
                potentials,
            });
        }
        Some(labels)
    } else {
        None
    };
    Ok(Trajectory {
        header: h,
        masses,
        charges,
        positions,
        velocities,
        accelerations,
        labels,
    })
}

pub fn save(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_trajectory(traj, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_trajectory(BufReader::new(File::open(path)?))
}

/// Debug export: a header line, then one JSON object per step.
pub fn write_jsonl<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    serde_json::to_writer(
        &mut w,
        &json!({
            "header": traj.header,
            "masses": traj.masses,
            "charges": traj.charges,
        }),
    )?;
    writeln!(w)?;
    for t in 0..traj.n_steps() {
        let rows = |a: ndarray::ArrayView2<f64>| -> Vec<Vec<f64>> {
            a.rows().into_iter().map(|r| r.to_vec()).collect()
        };
        let mut line = json!({
            "step": t,
            "positions": rows(traj.positions_at(t)),
            "velocities": rows(traj.velocities_at(t)),
            "accelerations": rows(traj.accelerations_at(t)),
        });
        if let Some(labels) = &traj.labels {
            let lab = &labels[t];
            line["edges"] = json!(lab
                .edges
                .receivers
                .iter()
                .zip(&lab.edges.senders)
                .map(|(r, s)| [r, s])
                .collect::<Vec<_>>());
            line["forces"] = json!(rows(lab.forces.view()));
            line["potentials"] = json!(lab.potentials);
        }
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back the header line of a JSON-lines export.
pub fn read_jsonl_header<R: BufRead>(r: R) -> Result<TrajectoryHeader> {
    let first = r
        .lines()
        .next()
        .ok_or_else(|| Error::data("empty JSON-lines file"))??;
    let v: serde_json::Value = serde_json::from_str(&first)?;
    Ok(serde_json::from_value(v["header"].clone())?)
}
