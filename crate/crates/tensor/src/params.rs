//! Named parameter sets and the checkpoint file format.
//!
//! A checkpoint is a framed file (see [`crate::container`]) whose JSON header
//! is a manifest listing every tensor's name, shape, byte offset and element
//! count, plus free-form `meta` supplied by the caller (architecture
//! hyperparameters, training state). The payload is the concatenation of all
//! tensors as little-endian `f32`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "lam-params/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Adds a tensor and returns its slot index.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, slot: usize) -> &Param<T> {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Param<T> {
        &mut self.params[slot]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf; the returned vars follow slot order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamStore<T>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    dtype: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    blob_bytes: usize,
}

pub fn write_checkpoint<W: Write, T: Real>(w: &mut W, meta: &serde_json::Value, store: &ParamStore<T>) -> Result<()> {
    let mut offset = 0;
    let tensors = store
        .iter()
        .map(|p| {
            let e = TensorEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset, len: p.value.len() };
            offset += 4 * p.value.len();
            e
        })
        .collect();
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.to_string(),
        dtype: "f32le".to_string(),
        meta: meta.clone(),
        tensors,
        blob_bytes: offset,
    };
    container::write_header(w, &manifest)?;
    for p in store.iter() {
        container::write_f32s(w, p.value.data().iter().map(|v| v.f64() as f32))?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<(serde_json::Value, ParamStore<T>)> {
    let (manifest, blob): (Manifest, _) = container::split(bytes)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(TensorError::Checkpoint(format!("unsupported format {:?}", manifest.format)));
    }
    if blob.len() != manifest.blob_bytes {
        return Err(TensorError::Checkpoint(format!(
            "blob is {} bytes, manifest says {}",
            blob.len(),
            manifest.blob_bytes
        )));
    }
    let mut store = ParamStore::new();
    for e in manifest.tensors {
        let values = container::read_f32s(blob, e.offset, e.len)?;
        let t = Tensor::new(&e.shape, values.into_iter().map(|v| T::of(v as f64)).collect())?;
        store.insert(e.name, t);
    }
    Ok((manifest.meta, store))
}
