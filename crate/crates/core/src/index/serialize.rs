//! Versioned little-endian binary encoding of a [`StagedIndex`].
//!
//! ```text
//! "DRMI"  u16 version
//! u8 arch kind (0 = linear, 1 = network)  u8 hidden layers  u32 width
//! u64 key_count  u64 key_min  u64 key_max  f64 position_span
//! root: linear -> f64 slope, f64 intercept
//!       network -> u32 n, n x f64 parameters
//! u64 leaf count, then per leaf: f64 slope, f64 intercept, i64 err_lo, i64 err_hi, u64 key_count
//! ```

use super::{LeafModel, StagedIndex};
use crate::error::{Error, Result};
use crate::models::{LinearModel, ModelArch, NeuralNet, RootModel};

pub const BLOB_MAGIC: [u8; 4] = *b"DRMI";
pub const BLOB_VERSION: u16 = 1;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }
}

impl StagedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.leaves.len() * 40);
        out.extend_from_slice(&BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        match self.arch() {
            ModelArch::Linear => out.extend_from_slice(&[0, 0, 0, 0, 0, 0]),
            ModelArch::Neural {
                hidden_layers,
                width,
            } => {
                out.extend_from_slice(&[1, hidden_layers]);
                out.extend_from_slice(&width.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.key_count as u64).to_le_bytes());
        out.extend_from_slice(&self.key_min.to_le_bytes());
        out.extend_from_slice(&self.key_max.to_le_bytes());
        out.extend_from_slice(&self.position_span.to_le_bytes());
        match &self.root {
            RootModel::Linear(m) => {
                out.extend_from_slice(&m.slope.to_le_bytes());
                out.extend_from_slice(&m.intercept.to_le_bytes());
            }
            RootModel::Neural(net) => {
                let params = net.params();
                out.extend_from_slice(&(params.len() as u32).to_le_bytes());
                for p in params {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.leaves.len() as u64).to_le_bytes());
        for leaf in &self.leaves {
            out.extend_from_slice(&leaf.model.slope.to_le_bytes());
            out.extend_from_slice(&leaf.model.intercept.to_le_bytes());
            out.extend_from_slice(&leaf.err_lo.to_le_bytes());
            out.extend_from_slice(&leaf.err_hi.to_le_bytes());
            out.extend_from_slice(&leaf.key_count.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let index = Self::read(&mut r)?;
        if !r.rest().is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.rest().len())));
        }
        Ok(index)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != BLOB_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = r.u8()?;
        let hidden_layers = r.u8()?;
        let width = r.u32()?;
        let arch = match kind {
            0 => ModelArch::Linear,
            1 => ModelArch::Neural {
                hidden_layers,
                width,
            },
            k => return Err(Error::Format(format!("unknown arch kind {k}"))),
        };
        arch.validate()
            .map_err(|e| Error::Format(format!("bad arch descriptor: {e}")))?;
        let key_count = r.u64()? as usize;
        let key_min = r.u64()?;
        let key_max = r.u64()?;
        let span = r.f64()?;
        let root = match arch {
            ModelArch::Linear => {
                let m = LinearModel::new(r.f64()?, r.f64()?);
                if !m.is_finite() {
                    return Err(Error::Format("non-finite root".into()));
                }
                RootModel::Linear(m)
            }
            ModelArch::Neural { .. } => {
                let count = r.u32()? as usize;
                let raw = r.take(
                    count
                        .checked_mul(8)
                        .ok_or_else(|| Error::Format("overflow".into()))?,
                )?;
                let params: Vec<f64> = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                let widths = arch.layer_widths().expect("network arch");
                RootModel::Neural(
                    NeuralNet::from_params(&widths, &params)
                        .map_err(|e| Error::Format(e.to_string()))?,
                )
            }
        };
        let leaf_count = r.u64()? as usize;
        if leaf_count == 0 || leaf_count > r.rest().len() / 40 {
            return Err(Error::Format(format!("bad leaf count {leaf_count}")));
        }
        let mut leaves = Vec::with_capacity(leaf_count);
        for _ in 0..leaf_count {
            let model = LinearModel::new(r.f64()?, r.f64()?);
            let err_lo = r.i64()?;
            let err_hi = r.i64()?;
            let key_count = r.u64()?;
            if !model.is_finite() || err_lo > err_hi {
                return Err(Error::Format("invalid leaf".into()));
            }
            leaves.push(LeafModel {
                model,
                err_lo,
                err_hi,
                key_count,
            });
        }
        Self::from_parts(root, leaves, key_count, key_min, key_max, span)
            .map_err(|e| Error::Format(e.to_string()))
    }
}
