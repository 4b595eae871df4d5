//! `FMNN` checkpoint files: named layers with parameters and Adagrad state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FMNN"            4 bytes magic
//! version           u16 (= 1)
//! layer_count       u32
//! per layer:
//!   name_len u32, name (UTF-8)
//!   weight_rank u32, weight dims u32 x rank
//!   bias_rank u32,   bias dims u32 x rank
//!   weights, biases, weight accumulators, bias accumulators   (f32 each)
//! ```

use std::path::Path;

use super::{LayerParams, Tensor};
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMNN";
const VERSION: u16 = 1;

/// Ordered collection of named layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<(String, LayerParams<f32>)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, params: LayerParams<f32>) {
        self.layers.push((name.into(), params));
    }

    pub fn get(&self, name: &str) -> Option<&LayerParams<f32>> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn take(&self, name: &str) -> Result<LayerParams<f32>> {
        self.get(name).cloned().ok_or_else(|| Error::InvalidInput(format!("checkpoint has no layer `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.len_u32(self.layers.len())?;
        for (name, p) in &self.layers {
            w.str(name)?;
            for shape in [p.weight.shape(), p.bias.shape()] {
                w.len_u32(shape.len())?;
                for &d in shape {
                    w.len_u32(d)?;
                }
            }
            w.f32s(p.weight.data());
            w.f32s(p.bias.data());
            w.f32s(p.weight_acc().data());
            w.f32s(p.bias_acc().data());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = ByteReader::open(path, bytes, MAGIC, VERSION)?;
        let count = r.u32()? as usize;
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let name = r.str()?;
            let mut shapes = [Vec::new(), Vec::new()];
            for shape in &mut shapes {
                let rank = r.u32()? as usize;
                if rank > super::tensor::MAX_RANK {
                    return Err(Error::format(r.path(), format!("layer `{name}`: rank {rank} too large")));
                }
                for _ in 0..rank {
                    shape.push(r.u32()? as usize);
                }
            }
            let [ws, bs] = shapes;
            let nw: usize = ws.iter().product();
            let nb: usize = bs.iter().product();
            let weight = Tensor::from_vec(&ws, r.f32s(nw)?)?;
            let bias = Tensor::from_vec(&bs, r.f32s(nb)?)?;
            let wacc = Tensor::from_vec(&ws, r.f32s(nw)?)?;
            let bacc = Tensor::from_vec(&bs, r.f32s(nb)?)?;
            let params = LayerParams::with_accumulators(weight, bias, wacc, bacc)
                .map_err(|e| Error::format(r.path(), format!("layer `{name}`: {e}")))?;
            ck.layers.push((name, params));
        }
        r.finish()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}
