//! Embedding tables and the checkpoint format.
//!
//! Checkpoint layout, little-endian:
//!
//! ```text
//! magic        8 bytes  b"WEMBCKPT"
//! version      u32      1
//! reserved     u32      0
//! num_nodes    u64
//! dim          u64
//! step         u64
//! config_hash  u64
//! values       f32 × (num_nodes · dim), row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rng;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WEMBCKPT";
const CHECKPOINT_VERSION: u32 = 1;

pub trait Scalar: Copy + Default + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(x: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}

/// Read access to rows of a `num_rows × dim` parameter matrix.
pub trait Rows: Sync {
    fn num_rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn read_row(&self, row: NodeId, out: &mut [f64]);
}

/// Dense row-major embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T: Scalar = f32> {
    num_nodes: usize,
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn zeros(num_nodes: usize, dim: usize) -> Self {
        EmbeddingTable {
            num_nodes,
            dim,
            values: vec![T::default(); num_nodes * dim],
        }
    }

    pub fn from_values(num_nodes: usize, dim: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != num_nodes * dim {
            return Err(Error::Config(format!(
                "{} values do not form a {num_nodes}×{dim} table",
                values.len()
            )));
        }
        Ok(EmbeddingTable {
            num_nodes,
            dim,
            values,
        })
    }

    /// Entries uniform in `[-1/(2d), 1/(2d)]`.
    pub fn init_uniform(num_nodes: usize, dim: usize, seed: u64) -> Self {
        let half = 0.5 / dim as f64;
        let mut rng = rng::stream(seed, &[0x7AB1E]);
        let values = (0..num_nodes * dim)
            .map(|_| T::from_f64(rng.gen_range(-half..=half)))
            .collect();
        EmbeddingTable {
            num_nodes,
            dim,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, u: NodeId) -> &[T] {
        let start = u as usize * self.dim;
        &self.values[start..start + self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, u: NodeId) -> &mut [T] {
        let start = u as usize * self.dim;
        &mut self.values[start..start + self.dim]
    }

    /// First row containing a NaN or infinity, if any.
    pub fn first_non_finite_row(&self) -> Option<NodeId> {
        (0..self.num_nodes as NodeId).find(|&u| self.row(u).iter().any(|v| !v.to_f64().is_finite()))
    }

    pub fn convert<U: Scalar>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            num_nodes: self.num_nodes,
            dim: self.dim,
            values: self
                .values
                .iter()
                .map(|v| U::from_f64(v.to_f64()))
                .collect(),
        }
    }
}

impl<T: Scalar> Rows for EmbeddingTable<T> {
    fn num_rows(&self) -> usize {
        self.num_nodes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn read_row(&self, row: NodeId, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.row(row)) {
            *o = v.to_f64();
        }
    }
}

/// An `f32` table shared between threads without locks.
///
/// Entries are read and written with relaxed atomic loads and stores; a
/// read-modify-write is not atomic as a whole, so concurrent updates to the
/// same entry may overwrite each other.
pub struct SharedTable {
    num_nodes: usize,
    dim: usize,
    bits: Vec<AtomicU32>,
}

impl SharedTable {
    pub fn new(table: EmbeddingTable<f32>) -> Self {
        SharedTable {
            num_nodes: table.num_nodes,
            dim: table.dim,
            bits: table
                .values
                .into_iter()
                .map(|v| AtomicU32::new(v.to_bits()))
                .collect(),
        }
    }

    /// `row += scale · delta`, entry by entry.
    #[inline]
    pub fn add_scaled(&self, row: NodeId, scale: f64, delta: &[f64]) {
        let start = row as usize * self.dim;
        for (cell, d) in self.bits[start..start + self.dim].iter().zip(delta) {
            let old = f32::from_bits(cell.load(Ordering::Relaxed));
            let new = (f64::from(old) + scale * d) as f32;
            cell.store(new.to_bits(), Ordering::Relaxed);
        }
    }

    pub fn into_table(self) -> EmbeddingTable<f32> {
        EmbeddingTable {
            num_nodes: self.num_nodes,
            dim: self.dim,
            values: self
                .bits
                .into_iter()
                .map(|b| f32::from_bits(b.into_inner()))
                .collect(),
        }
    }
}

impl Rows for SharedTable {
    fn num_rows(&self) -> usize {
        self.num_nodes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn read_row(&self, row: NodeId, out: &mut [f64]) {
        let start = row as usize * self.dim;
        for (o, cell) in out.iter_mut().zip(&self.bits[start..start + self.dim]) {
            *o = f64::from(f32::from_bits(cell.load(Ordering::Relaxed)));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub num_nodes: u64,
    pub dim: u64,
    pub step: u64,
    pub config_hash: u64,
}

pub fn write_checkpoint(
    table: &EmbeddingTable<f32>,
    step: u64,
    config_hash: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&0u32.to_le_bytes()).map_err(io)?;
    for x in [table.num_nodes as u64, table.dim as u64, step, config_hash] {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    for v in &table.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, EmbeddingTable<f32>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut head = [0u8; 48];
    r.read_exact(&mut head).map_err(io)?;
    if &head[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let u64_at = |i: usize| u64::from_le_bytes(head[i..i + 8].try_into().unwrap());
    let header = CheckpointHeader {
        num_nodes: u64_at(16),
        dim: u64_at(24),
        step: u64_at(32),
        config_hash: u64_at(40),
    };
    let len = (header.num_nodes as usize)
        .checked_mul(header.dim as usize)
        .ok_or_else(|| Error::format(path, "table size overflows"))?;
    let mut bytes = Vec::with_capacity(len * 4);
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != len * 4 {
        return Err(Error::format(
            path,
            format!("expected {} value bytes, found {}", len * 4, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let table =
        EmbeddingTable::from_values(header.num_nodes as usize, header.dim as usize, values)?;
    Ok((header, table))
}
