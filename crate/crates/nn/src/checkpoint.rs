//! Checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"VSCK" | version: u16 | meta_len: u32 | meta: UTF-8 "key=value\n" lines
//! count: u32 | count x (name_len: u16 | name | rank: u8 | dims: u32 x rank | f32 payload)
//! ```
//!
//! Payloads are stored as `f32`; an `f32` module round-trips bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{NnError, Result};
use crate::module::{named_parameters, named_parameters_mut, Module};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"VSCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(NnError::Checkpoint(msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => err("unexpected end of file"),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).or_else(|_| err("invalid UTF-8"))
    }
}

impl Checkpoint {
    /// Snapshot every parameter of `module`, converted to `f32`.
    pub fn from_module<T: Scalar, M: Module<T> + ?Sized>(module: &M) -> Self {
        let tensors = named_parameters(module)
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data.iter().map(|v| v.as_f32()).collect(),
            })
            .collect();
        Self {
            metadata: BTreeMap::new(),
            tensors,
        }
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copy stored values into `module`. Every module parameter must be
    /// present with the same shape.
    pub fn load_into<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<()> {
        let by_name: BTreeMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let params = named_parameters_mut(module);
        if params.len() != self.tensors.len() {
            return err(format!(
                "module has {} parameters, checkpoint has {}",
                params.len(),
                self.tensors.len()
            ));
        }
        for (name, t) in params {
            let Some(stored) = by_name.get(name.as_str()) else {
                return err(format!("missing tensor {name}"));
            };
            if stored.shape != t.shape() {
                return err(format!(
                    "{name}: stored shape {:?}, module shape {:?}",
                    stored.shape,
                    t.shape()
                ));
            }
            t.data = ArrayD::from_shape_vec(
                IxDyn(&stored.shape),
                stored.data.iter().map(|&v| T::of(v as f64)).collect(),
            )
            .expect("shape checked");
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return err(format!("metadata entry {k:?} cannot be encoded"));
            }
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len()).or_else(|_| err("tensor name too long"))?;
            let rank = u8::try_from(t.shape.len()).or_else(|_| err("tensor rank too large"))?;
            if t.shape.iter().product::<usize>() != t.data.len() {
                return err(format!("{}: shape does not match payload", t.name));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(rank);
            for &d in &t.shape {
                let d = u32::try_from(d).or_else(|_| err("dimension too large"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return err("bad magic");
        }
        let version = r.u16()?;
        if version != VERSION {
            return err(format!("unsupported version {version}"));
        }
        let meta_len = r.u32()? as usize;
        let meta = r.utf8(meta_len)?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines() {
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("bad metadata line {line:?}"));
            };
            metadata.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = r.utf8(name_len)?.to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("overflow".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return err("trailing bytes");
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn module_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Linear::<f32>::new(5, 3, &mut rng);
        let mut meta = BTreeMap::new();
        meta.insert("role".to_string(), "student".to_string());
        let ck = Checkpoint::from_module(&a).with_metadata(meta);
        let back = Checkpoint::decode(&ck.encode().unwrap()).unwrap();
        assert_eq!(back, ck);
        let mut b = Linear::<f32>::new(5, 3, &mut rng);
        back.load_into(&mut b).unwrap();
        let bits = |l: &Linear<f32>| l.weight.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn mismatched_module_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ck = Checkpoint::from_module(&Linear::<f32>::new(5, 3, &mut rng));
        let mut other = Linear::<f32>::new(4, 3, &mut rng);
        assert!(ck.load_into(&mut other).is_err());
    }

    #[test]
    fn corrupt_bytes_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bytes = Checkpoint::from_module(&Linear::<f32>::new(2, 2, &mut rng)).encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::decode(&long).is_err());
    }
}
