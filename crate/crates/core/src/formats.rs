//! Little-endian binary containers and pose sidecars.
//!
//! * GSF: `"GPRS"`, `u32` version 1, `u32` S, D, C, then `S·D·C` `f32`
//!   samples in (frame, depth, channel) order. Poses live in a sibling CSV
//!   (`frame,utm_x,utm_y`).
//! * NTC: `"NTC1"`, `u32` tensor count, then per tensor `u32` name length,
//!   UTF-8 name, `u32` rank, `u32` dims and `f32` data; finally a `u32`
//!   length-prefixed UTF-8 JSON metadata block.
//!
//! Values are stored as `f32`. Tensors whose entries are already
//! `f32`-representable round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gpr_sim::{GprSequence, Pose};
use crate::net::Descriptor;
use crate::numerics::Tensor;

const GSF_MAGIC: &[u8; 4] = b"GPRS";
const GSF_VERSION: u32 = 1;
const NTC_MAGIC: &[u8; 4] = b"NTC1";
pub const GSF_HEADER_LEN: usize = 20;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn put_f32s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after the last record".into()));
    }
    Ok(())
}

/// Writes the frame block (no poses).
pub fn write_gsf(w: &mut impl Write, frames: &Tensor) -> Result<()> {
    let [s, d, c] = *frames.shape() else {
        return Err(Error::Format(format!(
            "GSF frames must be S×D×C, got {:?}",
            frames.shape()
        )));
    };
    w.write_all(GSF_MAGIC)?;
    put_u32(w, GSF_VERSION as usize)?;
    put_u32(w, s)?;
    put_u32(w, d)?;
    put_u32(w, c)?;
    put_f32s(w, frames.data())
}

pub fn read_gsf(r: &mut impl Read) -> Result<Tensor> {
    expect_magic(r, GSF_MAGIC)?;
    let version = get_u32(r)?;
    if version != GSF_VERSION as usize {
        return Err(Error::Format(format!("unsupported GSF version {version}")));
    }
    let (s, d, c) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
    if s == 0 || d == 0 || c == 0 {
        return Err(Error::Format(format!("empty GSF extents {s}×{d}×{c}")));
    }
    let data = get_f32s(r, s * d * c)?;
    expect_eof(r)?;
    Tensor::new(&[s, d, c], data)
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    frame: u64,
    utm_x: f64,
    utm_y: f64,
}

/// Pose rows `frame,utm_x,utm_y` under a header line.
pub fn write_pose_csv(w: &mut impl Write, rows: &[(u64, Pose)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["frame", "utm_x", "utm_y"])
        .map_err(csv_err)?;
    for (frame, p) in rows {
        out.serialize(PoseRow {
            frame: *frame,
            utm_x: p.utm_x,
            utm_y: p.utm_y,
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pose_csv(r: impl Read) -> Result<Vec<(u64, Pose)>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers().map_err(csv_err)?;
    if header != vec!["frame", "utm_x", "utm_y"] {
        return Err(Error::Format(format!(
            "pose CSV header must be frame,utm_x,utm_y, got {:?}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .map(|row| {
            let row: PoseRow = row.map_err(csv_err)?;
            Ok((row.frame, Pose::new(row.utm_x, row.utm_y)))
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("pose CSV: {e}"))
}

/// Sibling pose file of a data file: `map.gsf` → `map.csv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn save_sequence(path: &Path, seq: &GprSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_gsf(&mut w, seq.frames())?;
    w.flush()?;
    let rows: Vec<(u64, Pose)> = seq
        .poses()
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, *p))
        .collect();
    let mut w = BufWriter::new(File::create(sidecar_path(path))?);
    write_pose_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

pub fn load_sequence(path: &Path) -> Result<GprSequence> {
    let frames = read_gsf(&mut BufReader::new(File::open(path)?))?;
    let rows = read_pose_csv(File::open(sidecar_path(path))?)?;
    if rows.len() != frames.shape()[0] {
        return Err(Error::Format(format!(
            "{} pose rows for {} frames",
            rows.len(),
            frames.shape()[0]
        )));
    }
    if rows.iter().enumerate().any(|(i, (id, _))| *id != i as u64) {
        return Err(Error::Format("pose CSV frames must be 0, 1, 2, ...".into()));
    }
    GprSequence::new(frames, rows.into_iter().map(|(_, p)| p).collect())
}

/// Named tensors plus free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Ntc {
    pub tensors: Vec<(String, Tensor)>,
    pub metadata: Value,
}

impl Ntc {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("container has no tensor {name:?}")))
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(NTC_MAGIC)?;
        put_u32(w, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(w, name.len())?;
            w.write_all(name.as_bytes())?;
            put_u32(w, t.rank())?;
            for &d in t.shape() {
                put_u32(w, d)?;
            }
            put_f32s(w, t.data())?;
        }
        let meta = serde_json::to_vec(&self.metadata)?;
        put_u32(w, meta.len())?;
        w.write_all(&meta)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, NTC_MAGIC)?;
        let count = get_u32(r)?;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = get_u32(r)?;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = get_u32(r)?;
            let shape = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = get_f32s(r, n)?;
            let t = Tensor::new(&shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        let len = get_u32(r)?;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        expect_eof(r)?;
        Ok(Self {
            tensors,
            metadata: serde_json::from_slice(&meta)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

/// Encoded windows: descriptors with their poses and frame ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    pub entries: Vec<(Descriptor, Pose, u64)>,
    pub metadata: Value,
}

impl DescriptorSet {
    /// NTC container (`descriptors` N×d, `frame_ids` N, `poses` N×2) plus a
    /// CSV sidecar. The CSV carries full-precision poses and wins on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.entries.len();
        let d = self.entries.first().map_or(0, |(e, _, _)| e.dim());
        if n == 0 || d == 0 {
            return Err(Error::Usage(
                "refusing to save an empty descriptor set".into(),
            ));
        }
        let mut rows = Vec::with_capacity(n * d);
        for (e, _, _) in &self.entries {
            if e.dim() != d {
                return Err(Error::Dimension("descriptor dimensions differ".into()));
            }
            rows.extend_from_slice(e.values());
        }
        let ntc = Ntc {
            tensors: vec![
                ("descriptors".into(), Tensor::new(&[n, d], rows)?),
                (
                    "frame_ids".into(),
                    Tensor::new(&[n], self.entries.iter().map(|e| e.2 as f64).collect())?,
                ),
                (
                    "poses".into(),
                    Tensor::new(
                        &[n, 2],
                        self.entries
                            .iter()
                            .flat_map(|e| [e.1.utm_x, e.1.utm_y])
                            .collect(),
                    )?,
                ),
            ],
            metadata: self.metadata.clone(),
        };
        ntc.save(path)?;
        let pose_rows: Vec<(u64, Pose)> = self.entries.iter().map(|e| (e.2, e.1)).collect();
        let mut w = BufWriter::new(File::create(sidecar_path(path))?);
        write_pose_csv(&mut w, &pose_rows)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ntc = Ntc::load(path)?;
        let desc = ntc.require("descriptors")?;
        let [n, d] = *desc.shape() else {
            return Err(Error::Format("descriptors must be N×d".into()));
        };
        let rows = read_pose_csv(File::open(sidecar_path(path))?)?;
        if rows.len() != n {
            return Err(Error::Format(format!(
                "{} pose rows for {n} descriptors",
                rows.len()
            )));
        }
        let entries = desc
            .data()
            .chunks_exact(d)
            .zip(rows)
            .map(|(v, (id, pose))| Ok((Descriptor::new(v.to_vec())?, pose, id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            metadata: ntc.metadata,
        })
    }
}
