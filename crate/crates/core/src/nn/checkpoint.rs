//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            4 bytes  "SCMP"
//! version          u32
//! variant          u8       1 = centroid model, 2 = learned-edge model
//! L M J K Q        u32 x 5  state, message, edge dims; steps; MLP depth
//! mlp_hidden       u32
//! normalization    u8       0 | 1
//! margin           f64
//! adam_step        u64
//! param_count      u32
//! per parameter:   name_len u32, name, group_len u32, group,
//!                  rank u32, dims u32 x rank, values f64 x prod(dims)
//! per parameter:   first moment f64 x n, second moment f64 x n
//! norm_present     u8
//! if present:      dim u32, running mean f64 x dim, running var f64 x dim
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::norm::NormState;
use crate::nn::registry::{Param, ParamRegistry};

pub const MAGIC: &[u8; 4] = b"SCMP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub variant: u8,
    pub state_dim: u32,
    pub message_dim: u32,
    pub edge_dim: u32,
    pub steps: u32,
    pub mlp_depth: u32,
    pub mlp_hidden: u32,
    pub normalization: bool,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub registry: ParamRegistry,
    pub norm: Option<NormState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn len_u32(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} overflows u32")))?;
        self.u32(n);
        Ok(())
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Validate the length before allocating.
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u8(h.variant);
        for d in [h.state_dim, h.message_dim, h.edge_dim, h.steps, h.mlp_depth, h.mlp_hidden] {
            w.u32(d);
        }
        w.u8(h.normalization as u8);
        w.f64s(&[h.margin]);
        w.u64(self.registry.step());
        w.len_u32(self.registry.len())?;
        for p in self.registry.iter() {
            w.str(&p.name)?;
            w.str(&p.group)?;
            w.len_u32(p.value.rank())?;
            for &d in p.value.shape() {
                w.len_u32(d)?;
            }
            w.f64s(p.value.data());
        }
        for p in self.registry.iter() {
            w.f64s(p.first_moment.data());
            w.f64s(p.second_moment.data());
        }
        match &self.norm {
            Some(n) => {
                w.u8(1);
                w.len_u32(n.dim())?;
                w.f64s(&n.running_mean);
                w.f64s(&n.running_var);
            }
            None => w.u8(0),
        }
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let variant = r.u8()?;
        let mut dims = [0u32; 6];
        for d in &mut dims {
            *d = r.u32()?;
        }
        let normalization = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Checkpoint(format!("bad normalization flag {other}"))),
        };
        let margin = r.f64()?;
        let header = CheckpointHeader {
            variant,
            state_dim: dims[0],
            message_dim: dims[1],
            edge_dim: dims[2],
            steps: dims[3],
            mlp_depth: dims[4],
            mlp_hidden: dims[5],
            normalization,
            margin,
        };

        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut values = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.str()?;
            let group = r.str()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product();
            let value = Tensor::new(shape, r.f64s(n)?)?;
            values.push((name, group, value));
        }
        let mut registry = ParamRegistry::new();
        for (name, group, value) in values {
            let shape = value.shape().to_vec();
            let n = value.len();
            let first_moment = Tensor::new(shape.clone(), r.f64s(n)?)?;
            let second_moment = Tensor::new(shape, r.f64s(n)?)?;
            registry.push_param(Param {
                name,
                group,
                value,
                first_moment,
                second_moment,
            })?;
        }
        registry.set_step(step);

        let norm = match r.u8()? {
            0 => None,
            1 => {
                let dim = r.u32()? as usize;
                Some(NormState {
                    running_mean: r.f64s(dim)?,
                    running_var: r.f64s(dim)?,
                })
            }
            other => return Err(Error::Checkpoint(format!("bad norm flag {other}"))),
        };
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            header,
            registry,
            norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&buf)
    }
}
