//! On-disk sequences and the CSV files produced by tracking runs.
//!
//! A sequence is a directory of numbered frames (`0001.png`, `img00002.jpg`, ...)
//! plus a ground-truth text file with one `x,y,w,h` line per frame. Commas, tabs
//! and spaces are all accepted as separators. A line with a non-finite or
//! non-positive size marks a frame without annotation.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};

use crate::cue::{Channels, RawFrame};
use crate::error::{Result, TrackError};
use crate::geometry::BBox;
use crate::synth::SyntheticSequence;
use crate::tracker::{TraceRecord, TrackResult};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Image files in `dir`, ordered by the last run of digits in the file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !is_image {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let number = frame_number(stem).ok_or_else(|| {
            TrackError::Parse(format!("frame file {} has no number", path.display()))
        })?;
        frames.push((number, path));
    }
    if frames.is_empty() {
        return Err(TrackError::Empty("frame directory"));
    }
    frames.sort();
    if let Some(w) = frames.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(TrackError::Parse(format!("duplicate frame number {}", w[0].0)));
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

fn frame_number(stem: &str) -> Option<u64> {
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end]
        .rfind(|c: char| !c.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Decode one frame; grayscale files load as gray, everything else as RGB.
pub fn load_frame(path: &Path, index: usize) -> Result<RawFrame<f32>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let frame = if img.color().has_color() {
        let data = img.to_rgb8().into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
        RawFrame::color(w, h, data, index)
    } else {
        let data = img.to_luma8().into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
        RawFrame::gray(w, h, data, index)
    };
    frame.validate()?;
    Ok(frame)
}

/// Quantize to 8 bits and write as an image; the format follows the extension.
pub fn save_frame(path: &Path, frame: &RawFrame<f32>) -> Result<()> {
    frame.validate()?;
    let bytes: Vec<u8> = frame.data.iter().map(|&v| (v * 255.0).round() as u8).collect();
    let (w, h) = (frame.width as u32, frame.height as u32);
    let img = match frame.channels {
        Channels::Gray => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, bytes).expect("validated frame size"),
        ),
        Channels::Color => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, bytes).expect("validated frame size"),
        ),
    };
    img.save(path)?;
    Ok(())
}

pub fn parse_ground_truth<R: Read>(reader: R) -> Result<Vec<Option<BBox<f64>>>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(TrackError::Parse(format!("line {}: expected x,y,w,h", n + 1)));
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = parse_number(field)
                .ok_or_else(|| TrackError::Parse(format!("line {}: bad number {field:?}", n + 1)))?;
        }
        let b = BBox::new(v[0], v[1], v[2], v[3]);
        out.push(b.is_valid().then_some(b));
    }
    Ok(out)
}

fn parse_number(s: &str) -> Option<f64> {
    if s.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<Option<BBox<f64>>>> {
    parse_ground_truth(fs::File::open(path)?)
}

pub fn write_ground_truth<W: Write>(mut writer: W, boxes: &[BBox<f64>]) -> Result<()> {
    for b in boxes {
        writeln!(writer, "{},{},{},{}", b.x, b.y, b.w, b.h)?;
    }
    Ok(())
}

/// Write `seq` as `<dir>/img/NNNN.png` plus `<dir>/groundtruth.txt`.
pub fn write_sequence(dir: &Path, seq: &SyntheticSequence) -> Result<()> {
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir)?;
    for frame in &seq.frames {
        save_frame(&img_dir.join(format!("{:04}.png", frame.index)), frame)?;
    }
    write_ground_truth(fs::File::create(dir.join("groundtruth.txt"))?, &seq.truth)
}

/// One row of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub quality: f64,
    pub updated: u8,
    pub ms: f64,
}

impl From<&TrackResult> for ResultRow {
    fn from(r: &TrackResult) -> Self {
        Self {
            frame: r.frame_index,
            x: r.bbox.x,
            y: r.bbox.y,
            w: r.bbox.w,
            h: r.bbox.h,
            score: r.score,
            quality: r.quality,
            updated: u8::from(r.updated),
            ms: r.elapsed_ms,
        }
    }
}

impl ResultRow {
    pub fn bbox(&self) -> BBox<f64> {
        BBox::new(self.x, self.y, self.w, self.h)
    }
}

/// Streams results as `frame,x,y,w,h,score,quality,updated,ms`.
pub struct ResultWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultWriter<W> {
    pub fn new(writer: W) -> Self {
        Self { inner: csv::Writer::from_writer(writer) }
    }

    pub fn write(&mut self, result: &TrackResult) -> Result<()> {
        self.inner.serialize(ResultRow::from(result))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_results<W: Write>(writer: W, results: &[TrackResult]) -> Result<()> {
    let mut w = ResultWriter::new(writer);
    for r in results {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TraceCsvRow {
    frame: usize,
    step: usize,
    cue: Option<usize>,
    loss: f64,
}

/// `frame,step,cue,loss`; `cue` is empty on the row that ended training.
pub fn write_trace<W: Write>(writer: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in trace {
        w.serialize(TraceCsvRow { frame: t.frame, step: t.row.step, cue: t.row.cue, loss: t.row.loss })?;
    }
    w.flush()?;
    Ok(())
}
