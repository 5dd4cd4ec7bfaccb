//! Co-occurrence records and their sharded on-disk format.
//!
//! A record directory holds `shard-SSSSS-of-NNNNN.bin` files plus a
//! `manifest.json` sidecar. Each shard file is:
//!
//! ```text
//! magic   8 bytes  b"WEMBCOO1"
//! record* { len: u32, payload: len bytes }
//! payload = source_id u64 | destination_id u64 | walk_length u32 | co_counts u64 × walk_length
//! ```
//!
//! All integers are little-endian. Records within a shard are in a seeded
//! pseudo-random order (see `sampler::run_sampling`) so that a trainer reading
//! a shard front to back sees sources mixed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{hex, NodeId};
use crate::sampler::{SamplerConfig, SamplingStats};

pub const SHARD_MAGIC: &[u8; 8] = b"WEMBCOO1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceRecord {
    pub source: NodeId,
    pub destination: NodeId,
    /// `co_counts[d]` counts visits at walk distance `d + 1`.
    pub co_counts: Vec<u64>,
}

impl CooccurrenceRecord {
    pub fn total(&self) -> u64 {
        self.co_counts.iter().sum()
    }

    /// `Σ_d weights[d] · co_counts[d]`; missing weights count as 1.
    pub fn weighted_total(&self, weights: &[f64]) -> f64 {
        self.co_counts
            .iter()
            .enumerate()
            .map(|(d, &c)| weights.get(d).copied().unwrap_or(1.0) * c as f64)
            .sum()
    }

    fn encode(&self, out: &mut Vec<u8>) {
        let payload_len = 8 + 8 + 4 + 8 * self.co_counts.len();
        out.extend_from_slice(&(payload_len as u32).to_le_bytes());
        out.extend_from_slice(&u64::from(self.source).to_le_bytes());
        out.extend_from_slice(&u64::from(self.destination).to_le_bytes());
        out.extend_from_slice(&(self.co_counts.len() as u32).to_le_bytes());
        for c in &self.co_counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
}

pub fn shard_file_name(shard: usize, num_shards: usize) -> String {
    format!("shard-{shard:05}-of-{num_shards:05}.bin")
}

/// Exclusive writer for one shard file.
pub struct ShardWriter {
    shard: usize,
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    records: u64,
    buf: Vec<u8>,
}

impl ShardWriter {
    pub fn create(dir: &Path, shard: usize, num_shards: usize) -> Result<Self> {
        let path = dir.join(shard_file_name(shard, num_shards));
        let file = File::create(&path).map_err(|source| Error::ShardIo { shard, source })?;
        let mut w = ShardWriter {
            shard,
            path,
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            records: 0,
            buf: Vec::with_capacity(64),
        };
        w.write_bytes(SHARD_MAGIC.to_vec())?;
        Ok(w)
    }

    fn write_bytes(&mut self, bytes: Vec<u8>) -> Result<()> {
        self.hasher.update(&bytes);
        let shard = self.shard;
        self.out
            .write_all(&bytes)
            .map_err(|source| Error::ShardIo { shard, source })?;
        self.buf = bytes;
        Ok(())
    }

    pub fn write(&mut self, record: &CooccurrenceRecord) -> Result<()> {
        let mut bytes = std::mem::take(&mut self.buf);
        bytes.clear();
        record.encode(&mut bytes);
        self.records += 1;
        self.write_bytes(bytes)
    }

    pub fn finish(mut self) -> Result<ShardInfo> {
        let shard = self.shard;
        self.out
            .flush()
            .map_err(|source| Error::ShardIo { shard, source })?;
        Ok(ShardInfo {
            file: self
                .path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            records: self.records,
            sha256: hex(&self.hasher.finalize()),
        })
    }
}

/// Streaming reader over one shard file.
pub struct ShardReader {
    path: PathBuf,
    input: BufReader<File>,
    payload: Vec<u8>,
}

impl ShardReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut input = BufReader::new(file);
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|e| Error::io(&path, e))?;
        if &magic != SHARD_MAGIC {
            return Err(Error::format(&path, "bad shard magic"));
        }
        Ok(ShardReader {
            path,
            input,
            payload: Vec::new(),
        })
    }

    fn next_record(&mut self) -> Result<Option<CooccurrenceRecord>> {
        let mut len = [0u8; 4];
        match self.input.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::io(&self.path, e)),
        }
        let len = u32::from_le_bytes(len) as usize;
        if len < 20 {
            return Err(Error::format(&self.path, "record shorter than its header"));
        }
        self.payload.resize(len, 0);
        self.input
            .read_exact(&mut self.payload)
            .map_err(|e| Error::io(&self.path, e))?;
        let p = &self.payload;
        let u64_at = |i: usize| u64::from_le_bytes(p[i..i + 8].try_into().unwrap());
        let source = u64_at(0);
        let destination = u64_at(8);
        let walk_length = u32::from_le_bytes(p[16..20].try_into().unwrap()) as usize;
        if len != 20 + 8 * walk_length {
            return Err(Error::format(&self.path, "record length mismatch"));
        }
        if source > u64::from(NodeId::MAX) || destination > u64::from(NodeId::MAX) {
            return Err(Error::format(&self.path, "node id exceeds 32 bits"));
        }
        let co_counts = (0..walk_length).map(|d| u64_at(20 + 8 * d)).collect();
        Ok(Some(CooccurrenceRecord {
            source: source as NodeId,
            destination: destination as NodeId,
            co_counts,
        }))
    }
}

impl Iterator for ShardReader {
    type Item = Result<CooccurrenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub format: String,
    pub config: SamplerConfig,
    pub graph_hash: String,
    pub num_nodes: usize,
    pub num_shards: usize,
    pub shards: Vec<ShardInfo>,
    pub stats: SamplingStats,
}

impl RecordManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn shard_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.shards.iter().map(|s| dir.join(&s.file)).collect()
    }

    /// Digest over all shard digests, identifying the whole record set.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.shards {
            h.update(s.sha256.as_bytes());
        }
        hex(&h.finalize())
    }
}

pub fn read_all(paths: &[PathBuf]) -> Result<Vec<CooccurrenceRecord>> {
    let mut out = Vec::new();
    for p in paths {
        for r in ShardReader::open(p)? {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Mirrors shards as TSV lines `source<TAB>destination<TAB>c1,c2,...`.
pub fn write_tsv(paths: &[PathBuf], out: &Path) -> Result<u64> {
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for p in paths {
        for r in ShardReader::open(p)? {
            let r = r?;
            let counts: Vec<String> = r.co_counts.iter().map(u64::to_string).collect();
            writeln!(w, "{}\t{}\t{}", r.source, r.destination, counts.join(","))
                .map_err(|e| Error::io(out, e))?;
            n += 1;
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(n)
}
