//! Binary container for named f64 tensors: model checkpoints and any other
//! matrix that has to survive a round trip to disk.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MSGN"  magic, 4 bytes
//! u32     format version, currently 1
//! u32     tensor count
//! then per tensor, in ascending name order:
//!   u16   name length in bytes, 1..=256
//!   ...   name, UTF-8
//!   u32   rows, nonzero
//!   u32   cols, nonzero
//!   ...   rows * cols f64 values, row-major
//! ```
//!
//! Decoding is strict: every length is checked against the remaining input
//! before any allocation, values must be finite, names must be unique and
//! sorted, and trailing bytes are an error.

use super::{BatchNorm, GcnParams, MlpParams, ModelParams};
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 4] = b"MSGN";
const VERSION: u32 = 1;
const FORMAT: &str = "tensor container";
const MAX_NAME_BYTES: usize = 256;
const MAX_TENSORS: usize = 4096;
/// Per-tensor element ceiling, 16M doubles (128 MiB).
const MAX_ELEMENTS: u64 = 1 << 24;

fn parse_err(detail: impl Into<String>) -> Error {
    Error::Parse {
        format: FORMAT,
        detail: detail.into(),
    }
}

/// An ordered collection of named f64 matrices with a strict binary codec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    entries: BTreeMap<String, DMatrix<f64>>,
}

impl TensorStore {
    pub fn new() -> Self {
        TensorStore::default()
    }

    /// Adds or replaces a tensor. Names must be 1..=256 bytes; values must
    /// be finite; empty tensors are rejected.
    pub fn insert(&mut self, name: &str, tensor: DMatrix<f64>) -> Result<()> {
        if name.is_empty() || name.len() > MAX_NAME_BYTES {
            return Err(Error::InvalidParameter(format!(
                "tensor name must be 1..={MAX_NAME_BYTES} bytes, got {}",
                name.len()
            )));
        }
        if tensor.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "tensor {name} has a zero dimension"
            )));
        }
        if (tensor.len() as u64) > MAX_ELEMENTS {
            return Err(Error::InvalidParameter(format!(
                "tensor {name} exceeds the {MAX_ELEMENTS} element limit"
            )));
        }
        if tensor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tensor {name} contains non-finite values"
            )));
        }
        if self.entries.len() >= MAX_TENSORS && !self.entries.contains_key(name) {
            return Err(Error::InvalidParameter(format!(
                "store is full ({MAX_TENSORS} tensors)"
            )));
        }
        self.entries.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.entries.get(name)
    }

    /// Names in encoding (ascending) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self.entries.values().map(|t| t.len() * 8).sum();
        let mut out = Vec::with_capacity(12 + payload + self.entries.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(tensor.ncols() as u32).to_le_bytes());
            for r in 0..tensor.nrows() {
                for c in 0..tensor.ncols() {
                    out.extend_from_slice(&tensor[(r, c)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(4)? != MAGIC {
            return Err(parse_err("bad magic"));
        }
        let version = reader.u32()?;
        if version != VERSION {
            return Err(parse_err(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let count = reader.u32()? as usize;
        if count > MAX_TENSORS {
            return Err(parse_err(format!(
                "tensor count {count} exceeds the {MAX_TENSORS} limit"
            )));
        }
        let mut entries = BTreeMap::new();
        let mut previous_name: Option<String> = None;
        for i in 0..count {
            let name_len = reader.u16()? as usize;
            if name_len == 0 || name_len > MAX_NAME_BYTES {
                return Err(parse_err(format!(
                    "tensor {i}: name length {name_len} outside 1..={MAX_NAME_BYTES}"
                )));
            }
            let name = std::str::from_utf8(reader.take(name_len)?)
                .map_err(|_| parse_err(format!("tensor {i}: name is not UTF-8")))?
                .to_string();
            if let Some(prev) = &previous_name {
                if *prev >= name {
                    return Err(parse_err(format!(
                        "tensor names out of order: {prev:?} then {name:?}"
                    )));
                }
            }
            let rows = reader.u32()? as u64;
            let cols = reader.u32()? as u64;
            if rows == 0 || cols == 0 {
                return Err(parse_err(format!("tensor {name}: zero dimension")));
            }
            let elements = rows
                .checked_mul(cols)
                .filter(|&e| e <= MAX_ELEMENTS)
                .ok_or_else(|| {
                    parse_err(format!(
                        "tensor {name}: {rows}x{cols} exceeds the element limit"
                    ))
                })?;
            let needed = elements as usize * 8;
            let raw = reader.take(needed).map_err(|_| {
                parse_err(format!(
                    "tensor {name}: payload truncated, needed {needed} bytes"
                ))
            })?;
            let mut tensor = DMatrix::zeros(rows as usize, cols as usize);
            for (k, chunk) in raw.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
                if !v.is_finite() {
                    return Err(parse_err(format!(
                        "tensor {name}: non-finite value at element {k}"
                    )));
                }
                let (r, c) = (k / cols as usize, k % cols as usize);
                tensor[(r, c)] = v;
            }
            entries.insert(name.clone(), tensor);
            previous_name = Some(name);
        }
        if reader.pos != bytes.len() {
            return Err(parse_err(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - reader.pos
            )));
        }
        Ok(TensorStore { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }
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
            .ok_or_else(|| parse_err(format!("input truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

impl ModelParams {
    /// Packs every parameter, running statistic, and hyperparameter scalar
    /// into a [`TensorStore`].
    pub fn to_store(&self) -> TensorStore {
        let mut store = TensorStore::new();
        let mut put = |name: &str, t: DMatrix<f64>| {
            store.insert(name, t).expect("model tensors are always storable");
        };
        put("gcn.w1", self.gcn.w1.clone());
        put("gcn.w2", self.gcn.w2.clone());
        put("gcn.w3", self.gcn.w3.clone());
        put("gcn.pool", self.gcn.pool.clone());
        put("gcn.dropout", scalar(self.gcn.dropout));
        put("mlp.w1", self.mlp.w1.clone());
        put("mlp.b1", self.mlp.b1.clone());
        put("mlp.w2", self.mlp.w2.clone());
        put("mlp.b2", self.mlp.b2.clone());
        put("mlp.w3", self.mlp.w3.clone());
        put("mlp.b3", self.mlp.b3.clone());
        put("mlp.dropout", scalar(self.mlp.dropout));
        for (prefix, bn) in [("mlp.bn1", &self.mlp.bn1), ("mlp.bn2", &self.mlp.bn2)] {
            put(&format!("{prefix}.gamma"), bn.gamma.clone());
            put(&format!("{prefix}.beta"), bn.beta.clone());
            put(&format!("{prefix}.running_mean"), bn.running_mean.clone());
            put(&format!("{prefix}.running_var"), bn.running_var.clone());
            put(&format!("{prefix}.momentum"), scalar(bn.momentum));
            put(&format!("{prefix}.eps"), scalar(bn.eps));
        }
        store
    }

    /// Rebuilds parameters from a store written by [`Self::to_store`],
    /// validating shapes and rates.
    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let fetch = |name: &str| -> Result<DMatrix<f64>> {
            store
                .get(name)
                .cloned()
                .ok_or_else(|| parse_err(format!("missing tensor {name}")))
        };
        let fetch_scalar = |name: &str| -> Result<f64> {
            let t = fetch(name)?;
            if t.shape() != (1, 1) {
                return Err(parse_err(format!(
                    "{name} must be 1x1, got {}x{}",
                    t.nrows(),
                    t.ncols()
                )));
            }
            Ok(t[(0, 0)])
        };
        let fetch_bn = |prefix: &str| -> Result<BatchNorm> {
            Ok(BatchNorm {
                gamma: fetch(&format!("{prefix}.gamma"))?,
                beta: fetch(&format!("{prefix}.beta"))?,
                running_mean: fetch(&format!("{prefix}.running_mean"))?,
                running_var: fetch(&format!("{prefix}.running_var"))?,
                momentum: fetch_scalar(&format!("{prefix}.momentum"))?,
                eps: fetch_scalar(&format!("{prefix}.eps"))?,
            })
        };
        let params = ModelParams {
            gcn: GcnParams {
                w1: fetch("gcn.w1")?,
                w2: fetch("gcn.w2")?,
                w3: fetch("gcn.w3")?,
                pool: fetch("gcn.pool")?,
                dropout: fetch_scalar("gcn.dropout")?,
            },
            mlp: MlpParams {
                w1: fetch("mlp.w1")?,
                b1: fetch("mlp.b1")?,
                bn1: fetch_bn("mlp.bn1")?,
                w2: fetch("mlp.w2")?,
                b2: fetch("mlp.b2")?,
                bn2: fetch_bn("mlp.bn2")?,
                w3: fetch("mlp.w3")?,
                b3: fetch("mlp.b3")?,
                dropout: fetch_scalar("mlp.dropout")?,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testgraphs::tiny_dims;
    use super::super::ModelParams;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> TensorStore {
        let mut store = TensorStore::new();
        store
            .insert("alpha", DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
            .unwrap();
        store.insert("beta", DMatrix::from_element(1, 1, -0.5)).unwrap();
        store
    }

    #[test]
    fn encode_decode_round_trips_bitwise() {
        let store = sample_store();
        let decoded = TensorStore::decode(&store.encode()).unwrap();
        assert_eq!(store, decoded);
    }

    #[test]
    fn header_layout_is_pinned() {
        let store = sample_store();
        let bytes = store.encode();
        assert_eq!(&bytes[0..4], b"MSGN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // First entry is "alpha": names encode in ascending order.
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 5);
        assert_eq!(&bytes[14..19], b"alpha");
    }

    #[test]
    fn model_params_round_trip_through_the_store() {
        let mut params = ModelParams::init(&tiny_dims(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        // Perturb buffers so the round trip covers non-default statistics.
        params.mlp.bn1.running_mean[(2, 0)] = 0.75;
        params.mlp.bn2.running_var[(1, 0)] = 3.5;
        params.gcn.dropout = 0.25;
        let store = params.to_store();
        let restored = ModelParams::from_store(&store).unwrap();
        assert_eq!(params, restored);
    }

    #[test]
    fn save_and_load_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.msgn");
        let store = sample_store();
        store.save(&path).unwrap();
        let loaded = TensorStore::load(&path).unwrap();
        assert_eq!(store, loaded);
    }

    #[test]
    fn every_truncation_is_rejected_without_panicking() {
        let bytes = sample_store().encode();
        for len in 0..bytes.len() {
            assert!(
                TensorStore::decode(&bytes[..len]).is_err(),
                "prefix of {len} bytes decoded"
            );
        }
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let good = sample_store().encode();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(TensorStore::decode(&bad_magic).is_err());

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(TensorStore::decode(&bad_version).is_err());

        let mut huge_count = good.clone();
        huge_count[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(TensorStore::decode(&huge_count).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(TensorStore::decode(&trailing).is_err());
    }

    #[test]
    fn oversized_shapes_are_rejected_before_allocation() {
        // Hand-build a header claiming a gigantic tensor; decode must fail
        // on the element limit, not attempt the allocation.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MSGN");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'a');
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(TensorStore::decode(&bytes).is_err());
    }

    #[test]
    fn zero_dimensions_and_order_violations_are_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MSGN");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'a');
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        assert!(TensorStore::decode(&bytes).is_err());

        // Two tensors out of order: "b" before "a".
        let mut store_b = TensorStore::new();
        store_b.insert("b", DMatrix::from_element(1, 1, 1.0)).unwrap();
        let mut store_a = TensorStore::new();
        store_a.insert("a", DMatrix::from_element(1, 1, 2.0)).unwrap();
        let enc_b = store_b.encode();
        let enc_a = store_a.encode();
        let mut swapped = Vec::new();
        swapped.extend_from_slice(b"MSGN");
        swapped.extend_from_slice(&1u32.to_le_bytes());
        swapped.extend_from_slice(&2u32.to_le_bytes());
        swapped.extend_from_slice(&enc_b[12..]);
        swapped.extend_from_slice(&enc_a[12..]);
        assert!(TensorStore::decode(&swapped).is_err());
    }

    #[test]
    fn non_finite_payloads_are_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MSGN");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'a');
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(TensorStore::decode(&bytes).is_err());
    }

    #[test]
    fn insert_validates_names_and_values() {
        let mut store = TensorStore::new();
        assert!(store.insert("", DMatrix::from_element(1, 1, 1.0)).is_err());
        let long = "x".repeat(300);
        assert!(store.insert(&long, DMatrix::from_element(1, 1, 1.0)).is_err());
        assert!(store
            .insert("nan", DMatrix::from_element(1, 1, f64::NAN))
            .is_err());
        assert!(store.insert("empty", DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn from_store_rejects_missing_or_misshapen_tensors() {
        let params = ModelParams::init(&tiny_dims(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut store = params.to_store();
        store.entries.remove("mlp.w2");
        assert!(ModelParams::from_store(&store).is_err());

        let mut store = params.to_store();
        store
            .insert("gcn.w2", DMatrix::from_element(3, 3, 0.1))
            .unwrap();
        assert!(ModelParams::from_store(&store).is_err());

        let mut store = params.to_store();
        store
            .insert("gcn.dropout", DMatrix::from_element(2, 1, 0.1))
            .unwrap();
        assert!(ModelParams::from_store(&store).is_err());
    }
}
