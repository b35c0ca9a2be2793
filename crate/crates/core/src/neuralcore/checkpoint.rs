//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "KFCKPT\0\0"
//! version   u32      = 1
//! kind      u32 length + UTF-8 bytes
//! count     u32      number of tensors
//! per tensor:
//!   name    u32 length + UTF-8 bytes
//!   ndim    u32
//!   dims    ndim x u64
//!   data    prod(dims) x f64 (IEEE-754 bits, row-major)
//! ```
//!
//! Payloads are raw bit patterns, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KFCKPT\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// What the tensors parameterise, e.g. `"sampler"` or `"policy"`.
    pub kind: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { kind, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 name".into()))
    }
}
