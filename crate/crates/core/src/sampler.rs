//! Random-walk co-occurrence sampling as a staged, sharded dataflow.
//!
//! The pipeline mirrors the distributed formulation on one machine:
//!
//! 1. every node is replicated `gamma` times as walk seeds;
//! 2. `walk_length` rounds of join (walk endpoint ⋈ adjacency) + sample;
//! 3. group visits by seed node;
//! 4. combine them into per-(source, destination) distance histograms.
//!
//! Stages are barriers. Each walk draws from a stream addressed by
//! `(seed, walk id, step)`, so the records do not depend on the number of
//! join partitions, worker threads, or seed chunks.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::records::{
    shard_file_name, CooccurrenceRecord, RecordManifest, ShardInfo, ShardReader, ShardWriter,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Walks started from every node.
    pub gamma: u32,
    pub walk_length: u32,
    pub seed: u64,
    pub num_shards: usize,
    pub sampling_kind: SamplingKind,
    /// Seeds processed per pipeline pass; bounds memory, never changes the record set.
    pub seeds_per_chunk: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            gamma: 128,
            walk_length: 3,
            seed: 0,
            num_shards: 8,
            sampling_kind: SamplingKind::Uniform,
            seeds_per_chunk: 8192,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma == 0 {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        if self.walk_length == 0 {
            return Err(Error::Config("walk_length must be at least 1".into()));
        }
        if self.walk_length > 255 {
            return Err(Error::Config("walk_length must be at most 255".into()));
        }
        if self.num_shards == 0 {
            return Err(Error::Config("num_shards must be at least 1".into()));
        }
        if self.seeds_per_chunk == 0 {
            return Err(Error::Config("seeds_per_chunk must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkState {
    pub seed_node: NodeId,
    pub replica: u32,
    pub current_node: NodeId,
    pub step: u32,
}

impl WalkState {
    fn walk_id(&self, gamma: u32) -> u64 {
        u64::from(self.seed_node) * u64::from(gamma) + u64::from(self.replica)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingStats {
    pub total_walks: u64,
    pub dead_end_terminations: u64,
    pub visits: u64,
    pub records: u64,
}

/// Replicates every node of `g` `gamma` times as a fresh walk.
pub fn init_walks(g: &Graph, cfg: &SamplerConfig) -> Vec<WalkState> {
    let seeds: Vec<NodeId> = (0..g.num_nodes() as NodeId).collect();
    seed_walks(&seeds, cfg.gamma)
}

fn seed_walks(seeds: &[NodeId], gamma: u32) -> Vec<WalkState> {
    seeds
        .iter()
        .flat_map(|&s| {
            (0..gamma).map(move |replica| WalkState {
                seed_node: s,
                replica,
                current_node: s,
                step: 0,
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct StepOutput {
    pub walks: Vec<WalkState>,
    pub dead_ends: u64,
}

/// One join + sample round. Walks are hash-partitioned by endpoint, each
/// partition joined against the adjacency and extended by one uniformly
/// chosen neighbor. Walks standing on a node without neighbors terminate.
pub fn step_walks(g: &Graph, walks: Vec<WalkState>, cfg: &SamplerConfig) -> StepOutput {
    let partitions = (rayon::current_num_threads() * 4).max(1);
    let mut buckets: Vec<Vec<WalkState>> = vec![Vec::new(); partitions];
    for w in walks {
        let p = (rng::mix64(u64::from(w.current_node)) % partitions as u64) as usize;
        buckets[p].push(w);
    }

    let results: Vec<(Vec<WalkState>, u64)> = buckets
        .into_par_iter()
        .map(|mut bucket| {
            // Sorting by endpoint turns the join into one adjacency lookup per key.
            bucket.sort_unstable_by_key(|w| w.current_node);
            let mut out = Vec::with_capacity(bucket.len());
            let mut dead = 0u64;
            for group in bucket.chunk_by(|a, b| a.current_node == b.current_node) {
                let nbrs = g.neighbors_of(group[0].current_node);
                if nbrs.is_empty() {
                    dead += group.len() as u64;
                    continue;
                }
                for w in group {
                    let next = match cfg.sampling_kind {
                        SamplingKind::Uniform => {
                            let mut r =
                                rng::positioned(cfg.seed, w.walk_id(cfg.gamma), u64::from(w.step));
                            nbrs[r.gen_range(0..nbrs.len())]
                        }
                    };
                    out.push(WalkState {
                        current_node: next,
                        step: w.step + 1,
                        ..*w
                    });
                }
            }
            (out, dead)
        })
        .collect();

    let dead_ends = results.iter().map(|(_, d)| d).sum();
    let walks = results.into_iter().flat_map(|(w, _)| w).collect();
    StepOutput { walks, dead_ends }
}

/// A visit packed as `(seed << 32 | destination, distance index)`.
type Visit = (u64, u8);

/// Groups visits by seed and folds them into per-destination histograms.
fn combine(mut visits: Vec<Visit>, walk_length: usize) -> Vec<CooccurrenceRecord> {
    visits.par_sort_unstable();
    let mut out: Vec<CooccurrenceRecord> = Vec::new();
    for group in visits.chunk_by(|a, b| a.0 == b.0) {
        let key = group[0].0;
        let mut co_counts = vec![0u64; walk_length];
        for &(_, d) in group {
            co_counts[d as usize] += 1;
        }
        out.push(CooccurrenceRecord {
            source: (key >> 32) as NodeId,
            destination: key as NodeId,
            co_counts,
        });
    }
    out
}

fn sample_chunk(
    g: &Graph,
    cfg: &SamplerConfig,
    seeds: &[NodeId],
    stats: &mut SamplingStats,
) -> Vec<CooccurrenceRecord> {
    let mut walks = seed_walks(seeds, cfg.gamma);
    stats.total_walks += walks.len() as u64;
    let mut visits: Vec<Visit> = Vec::with_capacity(walks.len() * cfg.walk_length as usize);
    for _ in 0..cfg.walk_length {
        let out = step_walks(g, walks, cfg);
        stats.dead_end_terminations += out.dead_ends;
        visits.extend(out.walks.iter().map(|w| {
            let key = (u64::from(w.seed_node) << 32) | u64::from(w.current_node);
            (key, (w.step - 1) as u8)
        }));
        walks = out.walks;
    }
    stats.visits += visits.len() as u64;
    let records = combine(visits, cfg.walk_length as usize);
    stats.records += records.len() as u64;
    records
}

/// Runs the full pipeline in memory, returning records ordered by
/// `(source, destination)`.
pub fn sample_records(
    g: &Graph,
    cfg: &SamplerConfig,
) -> Result<(Vec<CooccurrenceRecord>, SamplingStats)> {
    cfg.validate()?;
    let mut stats = SamplingStats::default();
    let mut records = Vec::new();
    for seeds in seed_order(g.num_nodes(), cfg.seed).chunks(cfg.seeds_per_chunk) {
        records.extend(sample_chunk(g, cfg, seeds, &mut stats));
    }
    records.par_sort_unstable_by_key(|r| (r.source, r.destination));
    Ok((records, stats))
}

/// Seeds in a seeded pseudo-random order, so every chunk (and so every
/// stretch of a shard file) covers sources from the whole graph.
fn seed_order(n: usize, seed: u64) -> Vec<NodeId> {
    let mut seeds: Vec<NodeId> = (0..n as NodeId).collect();
    seeds.sort_by_cached_key(|&s| rng::mix64(seed ^ rng::mix64(u64::from(s))));
    seeds
}

pub fn shard_of(source: NodeId, num_shards: usize) -> usize {
    (rng::mix64(u64::from(source)) % num_shards as u64) as usize
}

fn scatter_key(seed: u64, r: &CooccurrenceRecord) -> u64 {
    rng::mix64(seed ^ ((u64::from(r.source) << 32) | u64::from(r.destination)))
}

/// Runs the pipeline and writes records sharded by source id into `out_dir`,
/// together with a manifest.
///
/// Every shard file is ordered by a seeded hash of `(source, destination)`,
/// so a bounded reader-side shuffle buffer sees sources from the whole graph
/// at any point of the file. With more than one seed chunk, each chunk is
/// spilled as sorted runs and the runs are merged, which keeps the files
/// identical whatever the chunk size.
pub fn run_sampling(g: &Graph, cfg: &SamplerConfig, out_dir: &Path) -> Result<RecordManifest> {
    cfg.validate()?;
    if g.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut stats = SamplingStats::default();
    let order = seed_order(g.num_nodes(), cfg.seed);
    let chunks: Vec<&[NodeId]> = order.chunks(cfg.seeds_per_chunk).collect();
    let spill = out_dir.join(".runs");
    let mut run_dirs = Vec::new();
    for (i, seeds) in chunks.iter().enumerate() {
        log::debug!("sampling seed chunk {i} ({} seeds)", seeds.len());
        let mut records = sample_chunk(g, cfg, seeds, &mut stats);
        records.sort_by_cached_key(|r| scatter_key(cfg.seed, r));
        let dir = if chunks.len() == 1 {
            out_dir.to_path_buf()
        } else {
            spill.join(format!("chunk-{i:05}"))
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut writers = (0..cfg.num_shards)
            .map(|s| ShardWriter::create(&dir, s, cfg.num_shards))
            .collect::<Result<Vec<_>>>()?;
        for r in records {
            writers[shard_of(r.source, cfg.num_shards)].write(&r)?;
        }
        let finished = writers
            .into_iter()
            .map(ShardWriter::finish)
            .collect::<Result<Vec<_>>>()?;
        if chunks.len() == 1 {
            return finish_manifest(g, cfg, out_dir, finished, stats);
        }
        run_dirs.push(dir);
    }

    let shards = (0..cfg.num_shards)
        .map(|s| merge_runs(&run_dirs, s, cfg, out_dir))
        .collect::<Result<Vec<_>>>()?;
    std::fs::remove_dir_all(&spill).map_err(|e| Error::io(&spill, e))?;
    finish_manifest(g, cfg, out_dir, shards, stats)
}

/// K-way merge of one shard's sorted runs by scatter key; ties go to the
/// earlier chunk.
fn merge_runs(
    run_dirs: &[PathBuf],
    shard: usize,
    cfg: &SamplerConfig,
    out_dir: &Path,
) -> Result<ShardInfo> {
    let name = shard_file_name(shard, cfg.num_shards);
    let mut readers = run_dirs
        .iter()
        .map(|d| ShardReader::open(d.join(&name)))
        .collect::<Result<Vec<_>>>()?;
    let mut heads = BinaryHeap::new();
    let mut pending: Vec<Option<CooccurrenceRecord>> = vec![None; readers.len()];
    for (i, rd) in readers.iter_mut().enumerate() {
        if let Some(r) = rd.next().transpose()? {
            heads.push(Reverse((scatter_key(cfg.seed, &r), i)));
            pending[i] = Some(r);
        }
    }
    let mut w = ShardWriter::create(out_dir, shard, cfg.num_shards)?;
    while let Some(Reverse((_, i))) = heads.pop() {
        let r = pending[i].take().expect("heap entry without record");
        w.write(&r)?;
        if let Some(next) = readers[i].next().transpose()? {
            heads.push(Reverse((scatter_key(cfg.seed, &next), i)));
            pending[i] = Some(next);
        }
    }
    w.finish()
}

fn finish_manifest(
    g: &Graph,
    cfg: &SamplerConfig,
    out_dir: &Path,
    shards: Vec<ShardInfo>,
    stats: SamplingStats,
) -> Result<RecordManifest> {
    let manifest = RecordManifest {
        format: "walkembed-cooccurrence-v1".into(),
        config: cfg.clone(),
        graph_hash: g.content_hash(),
        num_nodes: g.num_nodes(),
        num_shards: cfg.num_shards,
        shards,
        stats,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}
