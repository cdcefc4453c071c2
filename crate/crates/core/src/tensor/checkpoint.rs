//! Named parameter storage and the binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "HDDICKPT"
//! version    u32       1
//! dtype      u8        4 = f32, 8 = f64
//! reserved   3 bytes   zero
//! count      u32       number of parameters
//! repeated `count` times, in store order:
//!   name_len u32, name (UTF-8)
//!   rank     u32, rank × u64 extents
//!   values   product(extents) × dtype bytes, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Gradients, Result, Tape, Tensor, TensorError, Var};

const MAGIC: &[u8; 8] = b"HDDICKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointDtype {
    F32,
    F64,
}

impl CheckpointDtype {
    fn tag(self) -> u8 {
        match self {
            CheckpointDtype::F32 => 4,
            CheckpointDtype::F64 => 8,
        }
    }
}

/// Insertion-ordered map from parameter name to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, value));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// True when both stores hold the same names, shapes and bit patterns.
    pub fn bitwise_eq(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Parameters of a [`ParamStore`] recorded as leaves on one tape.
pub struct BoundParams {
    vars: Vec<(String, Var)>,
    index: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index.get(name).copied().ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    /// `(name, gradient)` for every bound parameter, zeros where disconnected.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> Vec<(String, Tensor)> {
        self.vars.iter().map(|(n, v)| (n.clone(), grads.wrt(tape, *v))).collect()
    }
}

impl ParamStore {
    /// Records every parameter accepted by `filter` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape, filter: impl Fn(&str) -> bool) -> BoundParams {
        let mut vars = Vec::new();
        let mut index = BTreeMap::new();
        for (name, t) in self.iter().filter(|(n, _)| filter(n)) {
            let v = tape.leaf(t.clone());
            vars.push((name.to_string(), v));
            index.insert(name.to_string(), v);
        }
        BoundParams { vars, index }
    }

    /// Records every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        let mut vars = Vec::new();
        let mut index = BTreeMap::new();
        for (name, t) in self.iter() {
            let v = tape.constant(t.clone());
            vars.push((name.to_string(), v));
            index.insert(name.to_string(), v);
        }
        BoundParams { vars, index }
    }
}

pub fn save_params<W: Write>(store: &ParamStore, dtype: CheckpointDtype, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[dtype.tag(), 0, 0, 0])?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        match dtype {
            CheckpointDtype::F32 => {
                for &v in t.data() {
                    out.write_all(&(v as f32).to_le_bytes())?;
                }
            }
            CheckpointDtype::F64 => {
                for &v in t.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| TensorError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub fn load_params<R: Read>(mut input: R) -> Result<(ParamStore, CheckpointDtype)> {
    if &read_array::<8, _>(&mut input)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let header = read_array::<4, _>(&mut input)?;
    let dtype = match header[0] {
        4 => CheckpointDtype::F32,
        8 => CheckpointDtype::F64,
        other => return Err(TensorError::Checkpoint(format!("unknown dtype tag {other}"))),
    };
    let count = read_u32(&mut input)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; name_len];
        input
            .read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(read_array(&mut input)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(match dtype {
                CheckpointDtype::F32 => f32::from_le_bytes(read_array(&mut input)?) as f64,
                CheckpointDtype::F64 => f64::from_le_bytes(read_array(&mut input)?),
            });
        }
        let t = Tensor::new(&shape, data).map_err(|e| TensorError::Checkpoint(format!("`{name}`: {e}")))?;
        store.insert(name, t);
    }
    Ok((store, dtype))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_from(vals: &[Vec<f64>]) -> ParamStore {
        let mut s = ParamStore::new();
        for (i, v) in vals.iter().enumerate() {
            s.insert(format!("layer{i}.w"), Tensor::from_vec(v.clone()));
        }
        s
    }

    #[test]
    fn rejects_bad_magic() {
        let err = load_params(&b"NOTACKPT\x01\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, TensorError::Checkpoint(_)));
    }

    #[test]
    fn f32_roundtrip_is_bitwise_for_f32_values() {
        let s = store_from(&[vec![0.5, -1.25, 3.0e-3f32 as f64]]);
        let mut buf = Vec::new();
        save_params(&s, CheckpointDtype::F32, &mut buf).unwrap();
        let (back, dtype) = load_params(buf.as_slice()).unwrap();
        assert_eq!(dtype, CheckpointDtype::F32);
        assert!(back.bitwise_eq(&s));
    }

    proptest! {
        #[test]
        fn f64_roundtrip_is_bitwise(vals in proptest::collection::vec(
            proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 1..20), 0..5)
        ) {
            let s = store_from(&vals);
            let mut buf = Vec::new();
            save_params(&s, CheckpointDtype::F64, &mut buf).unwrap();
            let (back, _) = load_params(buf.as_slice()).unwrap();
            prop_assert!(back.bitwise_eq(&s));
        }
    }
}
