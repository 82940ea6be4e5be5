//! Binary container for model weights and sample-pool dumps.
//!
//! Layout: the magic bytes, a little-endian `u32` header length, a UTF-8 JSON
//! header, then every blob's values back to back as little-endian floats of the
//! header's dtype, in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cnn::CnnModel;
use crate::cue::{PatchTensor, NUM_CUES, PATCH_AREA};
use crate::error::{Result, TrackError};
use crate::geometry::{MotionState, PATCH_SIDE};
use crate::loss::Label;
use crate::pool::{FrameQuality, SamplePool, StoredSample};
use crate::scalar::Scalar;

/// Format name plus version; bump the suffix on any layout change.
pub const MAGIC: &[u8; 8] = b"CUETRK01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl BlobInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// `"model"` or `"pool"`.
    pub kind: String,
    pub dtype: String,
    pub blobs: Vec<BlobInfo>,
    /// Free-form metadata: cue kinds, hyperparameters.
    pub meta: Value,
}

/// Decoded container; values are widened to `f64` regardless of the stored dtype.
#[derive(Clone, Debug)]
pub struct Container {
    pub header: Header,
    pub data: Vec<Vec<f64>>,
}

impl Container {
    pub fn blob(&self, name: &str) -> Result<(&BlobInfo, &[f64])> {
        self.header
            .blobs
            .iter()
            .zip(&self.data)
            .find(|(b, _)| b.name == name)
            .map(|(b, d)| (b, d.as_slice()))
            .ok_or_else(|| TrackError::Format(format!("missing blob {name}")))
    }
}

pub fn write_container<T: Scalar, W: Write>(
    mut w: W,
    kind: &str,
    meta: Value,
    blobs: &[(BlobInfo, &[T])],
) -> Result<()> {
    for (info, values) in blobs {
        if info.len() != values.len() {
            return Err(TrackError::Shape(format!(
                "blob {} has {} values for shape {:?}",
                info.name,
                values.len(),
                info.shape
            )));
        }
    }
    let header = Header {
        kind: kind.into(),
        dtype: T::DTYPE.into(),
        blobs: blobs.iter().map(|(b, _)| b.clone()).collect(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| TrackError::Format("header too large".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    let wide = T::DTYPE == "f64";
    for (_, values) in blobs {
        let mut bytes = Vec::with_capacity(values.len() * if wide { 8 } else { 4 });
        for v in values.iter() {
            if wide {
                bytes.extend_from_slice(&v.as_f64().to_le_bytes());
            } else {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<Container> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TrackError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(TrackError::Format(format!("unknown dtype {other}"))),
    };
    let mut data = Vec::with_capacity(header.blobs.len());
    for info in &header.blobs {
        let mut bytes = vec![0u8; info.len() * width];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(width)
            .map(|c| match width {
                4 => f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))),
                _ => f64::from_le_bytes(c.try_into().expect("8 bytes")),
            })
            .collect();
        data.push(values);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(TrackError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(Container { header, data })
}

fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    if c.header.kind != kind {
        return Err(TrackError::Format(format!("expected a {kind} container, found {}", c.header.kind)));
    }
    Ok(())
}

pub fn write_model<T: Scalar, W: Write>(w: W, model: &CnnModel<T>, meta: Value) -> Result<()> {
    let blobs: Vec<(BlobInfo, &[T])> = model
        .blobs()
        .into_iter()
        .map(|b| (BlobInfo { name: b.name, shape: b.shape }, b.values))
        .collect();
    write_container(w, "model", meta, &blobs)
}

/// Model weights plus the stored metadata. Blob names and shapes must match exactly.
pub fn read_model<T: Scalar, R: Read>(r: R) -> Result<(CnnModel<T>, Value)> {
    let c = read_container(r)?;
    expect_kind(&c, "model")?;
    let mut model = CnnModel::<T>::zeros();
    let expected: Vec<BlobInfo> = model
        .blobs()
        .into_iter()
        .map(|b| BlobInfo { name: b.name, shape: b.shape })
        .collect();
    if expected != c.header.blobs {
        return Err(TrackError::Format("model blob layout does not match this network".into()));
    }
    for (dst, src) in model.blobs_mut().into_iter().zip(&c.data) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = T::lit(s);
        }
    }
    Ok((model, c.header.meta))
}

pub fn save_model<T: Scalar>(path: &Path, model: &CnnModel<T>, meta: Value) -> Result<()> {
    write_model(std::io::BufWriter::new(fs::File::create(path)?), model, meta)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<(CnnModel<T>, Value)> {
    read_model(std::io::BufReader::new(fs::File::open(path)?))
}

/// Per-sample scalar columns of a pool dump.
const SAMPLE_FIELDS: [&str; 7] = ["frame", "cx", "cy", "scale", "aspect", "importance", "flipped"];

struct SideBlobs<T> {
    patches: Vec<T>,
    fields: Vec<T>,
}

fn side_blobs<T: Scalar>(samples: &[StoredSample<T>]) -> SideBlobs<T> {
    let mut patches = Vec::with_capacity(samples.len() * NUM_CUES * PATCH_AREA);
    let mut fields = Vec::with_capacity(samples.len() * SAMPLE_FIELDS.len());
    for s in samples {
        patches.extend_from_slice(&s.patch.data);
        let flipped = if s.patch.flipped { T::one() } else { T::zero() };
        fields.extend([
            T::lit(s.frame_index as f64),
            s.state.cx,
            s.state.cy,
            s.state.scale,
            s.state.aspect,
            s.importance,
            flipped,
        ]);
    }
    SideBlobs { patches, fields }
}

/// Frame qualities go in the header as exact `f64`; patches and per-sample fields go in blobs.
pub fn write_pool<T: Scalar, W: Write>(w: W, pool: &SamplePool<T>, meta: Value) -> Result<()> {
    let pos = side_blobs(pool.positives());
    let neg = side_blobs(pool.negatives());
    let patch_shape = |n: usize| vec![n, NUM_CUES, PATCH_SIDE, PATCH_SIDE];
    let field_shape = |n: usize| vec![n, SAMPLE_FIELDS.len()];
    let (np, nn) = (pool.positives().len(), pool.negatives().len());
    let info = |name: &str, shape: Vec<usize>| BlobInfo { name: name.into(), shape };
    let blobs: Vec<(BlobInfo, &[T])> = vec![
        (info("positives.patches", patch_shape(np)), &pos.patches),
        (info("positives.fields", field_shape(np)), &pos.fields),
        (info("negatives.patches", patch_shape(nn)), &neg.patches),
        (info("negatives.fields", field_shape(nn)), &neg.fields),
    ];
    let meta = serde_json::json!({
        "frames": pool.frames(),
        "sample_fields": SAMPLE_FIELDS,
        "user": meta,
    });
    write_container(w, "pool", meta, &blobs)
}

fn read_side<T: Scalar>(c: &Container, prefix: &str, label: Label) -> Result<Vec<StoredSample<T>>> {
    let (pinfo, patches) = c.blob(&format!("{prefix}.patches"))?;
    let (finfo, fields) = c.blob(&format!("{prefix}.fields"))?;
    let n = pinfo.shape.first().copied().unwrap_or(0);
    if pinfo.shape != [n, NUM_CUES, PATCH_SIDE, PATCH_SIDE] || finfo.shape != [n, SAMPLE_FIELDS.len()] {
        return Err(TrackError::Format(format!("bad {prefix} blob shapes")));
    }
    let mut out = Vec::with_capacity(n);
    for (p, f) in patches
        .chunks_exact(NUM_CUES * PATCH_AREA)
        .zip(fields.chunks_exact(SAMPLE_FIELDS.len()))
    {
        let state = MotionState { cx: T::lit(f[1]), cy: T::lit(f[2]), scale: T::lit(f[3]), aspect: T::lit(f[4]) };
        out.push(StoredSample {
            patch: PatchTensor { data: p.iter().map(|&v| T::lit(v)).collect(), state, flipped: f[6] != 0.0 },
            state,
            label,
            frame_index: f[0] as usize,
            importance: T::lit(f[5]),
        });
    }
    Ok(out)
}

/// Rebuild a pool from a dump, frame by frame.
pub fn read_pool<T: Scalar, R: Read>(r: R) -> Result<SamplePool<T>> {
    let c = read_container(r)?;
    expect_kind(&c, "pool")?;
    let frames: Vec<FrameQuality> = serde_json::from_value(c.header.meta["frames"].clone())?;
    let mut pos = read_side::<T>(&c, "positives", Label::Positive)?.into_iter().peekable();
    let mut neg = read_side::<T>(&c, "negatives", Label::Negative)?.into_iter().peekable();
    let mut pool = SamplePool::new();
    for f in frames {
        let index = f.frame_index;
        let take = |it: &mut std::iter::Peekable<std::vec::IntoIter<StoredSample<T>>>| {
            let mut v = Vec::new();
            while let Some(s) = it.next_if(|s| s.frame_index == index) {
                v.push(s);
            }
            v
        };
        let (p, n) = (take(&mut pos), take(&mut neg));
        pool.add_frame(p, n, f)?;
    }
    if pos.next().is_some() || neg.next().is_some() {
        return Err(TrackError::Format("samples belong to no listed frame".into()));
    }
    Ok(pool)
}

pub fn save_pool<T: Scalar>(path: &Path, pool: &SamplePool<T>, meta: Value) -> Result<()> {
    write_pool(std::io::BufWriter::new(fs::File::create(path)?), pool, meta)
}
