//! Bags of segment features, one per video.
//!
//! `FMBG` bag files: magic, u16 version, video id, u8 label (0 normal,
//! 1 anomalous), u32 segment count m, u32 dimension d, then m·d
//! little-endian f32 values row-major. Bag manifests are UTF-8 lines
//! `video id<TAB>label<TAB>path`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::motiondata::VideoLabel;
use crate::nncore::Tensor;

const MAGIC: &[u8; 4] = b"FMBG";
const VERSION: u16 = 1;

/// One video as `m` L2-normalized segment feature rows. Anomalous videos are
/// positive bags, normal videos negative bags.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub video_id: String,
    pub label: VideoLabel,
    /// `[m, d]`.
    pub features: Tensor<f32>,
}

impl Bag {
    pub fn new(video_id: impl Into<String>, label: VideoLabel, features: Tensor<f32>) -> Result<Self> {
        if features.rank() != 2 || features.shape()[0] == 0 || features.shape()[1] == 0 {
            return Err(Error::shape("bag", &[32, 0], features.shape()));
        }
        Ok(Bag { video_id: video_id.into(), label, features })
    }

    pub fn segments(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.features.data()[i * d..(i + 1) * d]
    }

    pub fn is_positive(&self) -> bool {
        self.label.is_anomalous()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.str(&self.video_id)?;
        w.u8(u8::from(self.is_positive()));
        w.len_u32(self.segments())?;
        w.len_u32(self.dim())?;
        w.f32s(self.features.data());
        Ok(w.finish())
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = ByteReader::open(path, bytes, MAGIC, VERSION)?;
        let id = r.str()?;
        let label = match r.u8()? {
            0 => VideoLabel::Normal,
            1 => VideoLabel::Anomalous,
            b => return Err(Error::format(path, format!("bad label byte {b}"))),
        };
        let (m, d) = (r.u32()? as usize, r.u32()? as usize);
        let values = r.f32s(m * d)?;
        r.finish()?;
        Bag::new(id, label, Tensor::from_vec(&[m, d], values)?).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}

/// Scales `v` to unit Euclidean norm; all-zero vectors are left as they are.
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

/// Clip index range averaged into segment `s` of `m` when a video has
/// `n` clips. Segments are contiguous and near-equal; with fewer clips than
/// segments each clip is repeated in temporal order.
pub fn segment_clips(s: usize, m: usize, n: usize) -> std::ops::Range<usize> {
    let start = s * n / m;
    let end = ((s + 1) * n / m).max(start + 1).min(n.max(1));
    start.min(n - 1)..end
}

/// Groups ordered clip features into `m` segments, averages each group and
/// L2-normalizes the result.
pub fn build_bag(video_id: &str, label: VideoLabel, clip_features: &[Vec<f32>], m: usize) -> Result<Bag> {
    if clip_features.is_empty() {
        return Err(Error::InvalidInput(format!("video `{video_id}` has no clip features")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("segment count must be positive".into()));
    }
    let d = clip_features[0].len();
    if let Some(bad) = clip_features.iter().find(|f| f.len() != d) {
        return Err(Error::shape("build_bag", &[d], &[bad.len()]));
    }
    let n = clip_features.len();
    let mut data = Vec::with_capacity(m * d);
    for s in 0..m {
        let range = segment_clips(s, m, n);
        let count = range.len() as f64;
        let mut row = vec![0.0f64; d];
        for clip in &clip_features[range] {
            for (acc, &v) in row.iter_mut().zip(clip) {
                *acc += v as f64;
            }
        }
        let mut row: Vec<f32> = row.into_iter().map(|v| (v / count) as f32).collect();
        l2_normalize(&mut row);
        data.extend(row);
    }
    Bag::new(video_id, label, Tensor::from_vec(&[m, d], data)?)
}

/// Concatenates two feature vectors and L2-normalizes the result.
pub fn fuse_features(a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    l2_normalize(&mut v);
    v
}

/// Row-wise [`fuse_features`] of two bags of the same video and segment count.
pub fn fuse_bags(a: &Bag, b: &Bag) -> Result<Bag> {
    if a.segments() != b.segments() {
        return Err(Error::shape("fuse_bags", &[a.segments()], &[b.segments()]));
    }
    let d = a.dim() + b.dim();
    let data = (0..a.segments()).flat_map(|i| fuse_features(a.row(i), b.row(i))).collect();
    Bag::new(a.video_id.clone(), a.label, Tensor::from_vec(&[a.segments(), d], data)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BagManifestEntry {
    pub video_id: String,
    pub label: VideoLabel,
    pub path: PathBuf,
}

pub fn format_bag_manifest(entries: &[BagManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}", e.video_id, e.label.as_str(), e.path.display());
    }
    s
}

pub fn parse_bag_manifest(path: &Path, text: &str) -> Result<Vec<BagManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let label = f.get(1).and_then(|l| VideoLabel::parse(l));
            match (f.len(), label) {
                (3, Some(label)) => Ok(BagManifestEntry { video_id: f[0].into(), label, path: PathBuf::from(f[2]) }),
                _ => Err(Error::format(path, format!("line {}: expected `id<TAB>label<TAB>path`", i + 1))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn sixty_four_clips_pair_up() {
        let clips: Vec<Vec<f32>> = (0..64).map(|i| vec![i as f32 + 1.0, 1.0]).collect();
        for s in 0..32 {
            assert_eq!(segment_clips(s, 32, 64), 2 * s..2 * s + 2);
        }
        let bag = build_bag("v", VideoLabel::Normal, &clips, 32).unwrap();
        assert_eq!(bag.features.shape(), &[32, 2]);
        assert!((bag.row(1)[0] as f64 - 3.5 / (3.5f64 * 3.5 + 1.0).sqrt()).abs() < 1e-6);
        assert!((bag.row(0)[0] as f64 - 1.5 / (1.5f64 * 1.5 + 1.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn few_clips_are_repeated_in_order() {
        let clips: Vec<Vec<f32>> = (0..5).map(|i| vec![i as f32, 1.0, -2.0]).collect();
        let bag = build_bag("v", VideoLabel::Anomalous, &clips, 32).unwrap();
        let mut last = 0;
        for s in 0..32 {
            let r = segment_clips(s, 32, 5);
            assert_eq!(r.len(), 1);
            assert!(r.start >= last);
            last = r.start;
            assert!((norm(bag.row(s)) - 1.0).abs() < 1e-5);
        }
        assert_eq!(segment_clips(31, 32, 5), 4..5);
    }

    #[test]
    fn empty_input_errors() {
        assert!(build_bag("v", VideoLabel::Normal, &[], 32).is_err());
        assert!(build_bag("v", VideoLabel::Normal, &[vec![1.0]], 0).is_err());
    }

    #[test]
    fn fusion_concatenates_and_normalizes() {
        let a = vec![0.5f32; 4096];
        let b = vec![-0.25f32; 1024];
        let f = fuse_features(&a, &b);
        assert_eq!(f.len(), 5120);
        assert!((norm(&f) - 1.0).abs() < 1e-5);
        let x = [3.0f32, 4.0];
        assert_eq!(fuse_features(&x, &[]), vec![0.6, 0.8]);
    }

    #[test]
    fn bag_file_round_trip() {
        let b = Bag::new("v1", VideoLabel::Anomalous, Tensor::from_fn(&[3, 2], |i| i as f32)).unwrap();
        assert_eq!(Bag::from_bytes(Path::new("x"), &b.to_bytes().unwrap()).unwrap(), b);
        let entries = vec![BagManifestEntry { video_id: "v1".into(), label: VideoLabel::Anomalous, path: "bags/v1.fmbg".into() }];
        assert_eq!(parse_bag_manifest(Path::new("m"), &format_bag_manifest(&entries)).unwrap(), entries);
    }
}
