//! `FMFT` feature files: magic, u16 version, clip id (u32 length + UTF-8),
//! u32 length, then little-endian f32 values.

use std::path::Path;

use super::model::MotionFeature;
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::Result;

const MAGIC: &[u8; 4] = b"FMFT";
const VERSION: u16 = 1;

pub fn feature_to_bytes(feature: &MotionFeature) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(MAGIC, VERSION);
    w.str(&feature.clip_id)?;
    w.len_u32(feature.values.len())?;
    w.f32s(&feature.values);
    Ok(w.finish())
}

pub fn feature_from_bytes(path: &Path, bytes: &[u8]) -> Result<MotionFeature> {
    let (mut r, _) = ByteReader::open(path, bytes, MAGIC, VERSION)?;
    let clip_id = r.str()?;
    let n = r.u32()? as usize;
    let values = r.f32s(n)?;
    r.finish()?;
    Ok(MotionFeature { clip_id, values })
}

pub fn write_feature_file(feature: &MotionFeature, path: &Path) -> Result<()> {
    write_atomic(path, &feature_to_bytes(feature)?)
}

pub fn read_feature_file(path: &Path) -> Result<MotionFeature> {
    feature_from_bytes(path, &read_file(path)?)
}
