//! On-disk formats owned by the data stage.
//!
//! * `FMFL` flow stack: magic, u16 version, clip id (u32 length + UTF-8),
//!   u32 C, u32 H, u32 W, then C·H·W little-endian f32 values.
//! * `FMVD` video frames: magic, u16 version, video id, u8 label
//!   (0 normal, 1 anomalous), u32 frame count, u32 H, u32 W, raw u8 pixels.
//! * `FMXF` external per-segment features: magic, u16 version, video id,
//!   feature name, u32 rows, u32 dimension, f32 values row-major.
//! * Dataset manifest: UTF-8 lines `id<TAB>label<TAB>frames<TAB>path`.
//! * Ground truth (evaluator-only): UTF-8 lines
//!   `id<TAB>frames<TAB>start-end,start-end` with half-open frame ranges.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::flow::{parse_clip_id, FlowStack, GrayImage};
use super::synth::{GroundTruth, SyntheticVideo, VideoLabel};
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

const FLOW_MAGIC: &[u8; 4] = b"FMFL";
const VIDEO_MAGIC: &[u8; 4] = b"FMVD";
const EXTERNAL_MAGIC: &[u8; 4] = b"FMXF";
const VERSION: u16 = 1;

pub fn flow_to_bytes(stack: &FlowStack) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(FLOW_MAGIC, VERSION);
    w.str(&stack.clip_id())?;
    for &d in stack.tensor.shape() {
        w.len_u32(d)?;
    }
    w.f32s(stack.tensor.data());
    Ok(w.finish())
}

pub fn flow_from_bytes(path: &Path, bytes: &[u8]) -> Result<FlowStack> {
    let (mut r, _) = ByteReader::open(path, bytes, FLOW_MAGIC, VERSION)?;
    let id = r.str()?;
    let (video, clip) = parse_clip_id(&id).ok_or_else(|| Error::format(path, format!("malformed clip id `{id}`")))?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let values = r.f32s(dims.iter().product())?;
    r.finish()?;
    FlowStack::new(video, clip, Tensor::from_vec(&dims, values)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_flow_file(stack: &FlowStack, path: &Path) -> Result<()> {
    write_atomic(path, &flow_to_bytes(stack)?)
}

pub fn read_flow_file(path: &Path) -> Result<FlowStack> {
    flow_from_bytes(path, &read_file(path)?)
}

pub fn video_to_bytes(video: &SyntheticVideo) -> Result<Vec<u8>> {
    let (h, wd) = video.frames.first().map_or((0, 0), |f| (f.height(), f.width()));
    let mut w = ByteWriter::new(VIDEO_MAGIC, VERSION);
    w.str(&video.id)?;
    w.u8(u8::from(video.label.is_anomalous()));
    w.len_u32(video.frame_count())?;
    w.len_u32(h)?;
    w.len_u32(wd)?;
    for f in &video.frames {
        w.u8s(f.pixels());
    }
    Ok(w.finish())
}

/// Frames and label of a stored video. The ground-truth mask is not part
/// of this file.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredVideo {
    pub id: String,
    pub label: VideoLabel,
    pub frames: Vec<GrayImage>,
}

pub fn video_from_bytes(path: &Path, bytes: &[u8]) -> Result<StoredVideo> {
    let (mut r, _) = ByteReader::open(path, bytes, VIDEO_MAGIC, VERSION)?;
    let id = r.str()?;
    let label = match r.u8()? {
        0 => VideoLabel::Normal,
        1 => VideoLabel::Anomalous,
        other => return Err(Error::format(path, format!("bad label byte {other}"))),
    };
    let (n, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let pixels = r.take(n * h * w)?;
    r.finish()?;
    let frames = if h * w == 0 {
        Vec::new()
    } else {
        pixels.chunks_exact(h * w).map(|p| GrayImage::new(w, h, p.to_vec())).collect::<Result<_>>()?
    };
    Ok(StoredVideo { id, label, frames })
}

pub fn write_video_file(video: &SyntheticVideo, path: &Path) -> Result<()> {
    write_atomic(path, &video_to_bytes(video)?)
}

pub fn read_video_file(path: &Path) -> Result<StoredVideo> {
    video_from_bytes(path, &read_file(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: VideoLabel,
    pub frames: usize,
    pub path: PathBuf,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", e.id, e.label.as_str(), e.frames, e.path.display());
    }
    s
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |m: &str| Error::format(path, format!("line {}: {m}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            Ok(ManifestEntry {
                id: f[0].to_string(),
                label: VideoLabel::parse(f[1]).ok_or_else(|| bad("label must be `normal` or `anomalous`"))?,
                frames: f[2].parse().map_err(|_| bad("frame count is not an integer"))?,
                path: PathBuf::from(f[3]),
            })
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "manifest is not UTF-8"))?;
    parse_manifest(path, &text)
}

pub fn format_truth(truths: &[GroundTruth]) -> String {
    let mut s = String::new();
    for gt in truths {
        let spans: Vec<String> = gt.intervals().iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let _ = writeln!(s, "{}\t{}\t{}", gt.video_id, gt.mask.len(), spans.join(","));
    }
    s
}

pub fn write_truth_file(truths: &[GroundTruth], path: &Path) -> Result<()> {
    write_atomic(path, format_truth(truths).as_bytes())
}

/// Features computed elsewhere (for example by an appearance network),
/// one row per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalFeatureFile {
    pub video_id: String,
    pub name: String,
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl ExternalFeatureFile {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.values.len() != self.rows * self.dim {
            return Err(Error::shape("external features", &[self.rows, self.dim], &[self.values.len()]));
        }
        let mut w = ByteWriter::new(EXTERNAL_MAGIC, VERSION);
        w.str(&self.video_id)?;
        w.str(&self.name)?;
        w.len_u32(self.rows)?;
        w.len_u32(self.dim)?;
        w.f32s(&self.values);
        Ok(w.finish())
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = ByteReader::open(path, bytes, EXTERNAL_MAGIC, VERSION)?;
        let video_id = r.str()?;
        let name = r.str()?;
        let (rows, dim) = (r.u32()? as usize, r.u32()? as usize);
        let values = r.f32s(rows * dim)?;
        r.finish()?;
        Ok(ExternalFeatureFile { video_id, name, rows, dim, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}
