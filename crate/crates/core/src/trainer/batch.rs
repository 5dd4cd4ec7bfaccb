//! Input pipeline: positive pairs streamed from record shards through a
//! shuffle buffer, augmented with uniformly drawn negatives.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::records::{CooccurrenceRecord, ShardReader};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingExample {
    pub source: NodeId,
    pub destination: NodeId,
    pub weight: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Positive {
    pub source: NodeId,
    pub destination: NodeId,
    pub weight: f64,
}

/// How a stream turns records into weighted positives.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveFilter {
    /// Per-distance weights; missing entries count as 1.
    pub distance_weighting: Vec<f64>,
    pub drop_self_pairs: bool,
}

impl PositiveFilter {
    fn apply(&self, r: &CooccurrenceRecord) -> Option<Positive> {
        if self.drop_self_pairs && r.source == r.destination {
            return None;
        }
        let weight = r.weighted_total(&self.distance_weighting);
        (weight > 0.0).then_some(Positive {
            source: r.source,
            destination: r.destination,
            weight,
        })
    }
}

enum Source {
    /// All of a worker's shards are open at once and read in turn, one
    /// record each, so the buffer always mixes every shard's sources.
    Files {
        shards: Vec<PathBuf>,
        order: Vec<usize>,
        readers: Vec<Option<ShardReader>>,
        /// Raw records consumed from each shard this epoch.
        positions: Vec<u64>,
        exhausted: Vec<bool>,
        cursor: usize,
        /// Index into `shards` of the last record returned.
        last: usize,
    },
    Memory {
        records: Vec<CooccurrenceRecord>,
        position: usize,
    },
}

/// A worker's view of the positive pairs, one epoch at a time.
///
/// Shards are interleaved in a freshly shuffled turn order each epoch and
/// records pass through a shuffle buffer before being emitted. `next` returns
/// `None` at the end of an epoch; `start_epoch` begins the next one.
pub struct PositiveStream {
    source: Source,
    /// `(worker, workers)` when records rather than shards are split.
    stride: Option<(u64, u64)>,
    filter: PositiveFilter,
    rng: ChaCha8Rng,
    buffer: Vec<Positive>,
    capacity: usize,
    epoch: u64,
}

impl PositiveStream {
    /// Stream for `worker` of `workers`. With at least as many shards as
    /// workers, shards are dealt round-robin; otherwise every worker reads
    /// every shard and keeps every `workers`-th record.
    pub fn for_worker(
        shards: &[PathBuf],
        worker: usize,
        workers: usize,
        filter: PositiveFilter,
        buffer_capacity: usize,
        seed: u64,
    ) -> Self {
        let (mine, stride) = if shards.len() >= workers {
            let mine = shards
                .iter()
                .enumerate()
                .filter(|(i, _)| i % workers == worker)
                .map(|(_, p)| p.clone())
                .collect();
            (mine, None)
        } else {
            (shards.to_vec(), Some((worker as u64, workers as u64)))
        };
        let n = mine.len();
        let mut s = PositiveStream {
            source: Source::Files {
                shards: mine,
                order: (0..n).collect(),
                readers: (0..n).map(|_| None).collect(),
                positions: vec![0; n],
                exhausted: vec![false; n],
                cursor: 0,
                last: 0,
            },
            stride,
            filter,
            rng: rng::stream(seed, &[0x5EA3, worker as u64]),
            buffer: Vec::new(),
            capacity: buffer_capacity.max(1),
            epoch: 0,
        };
        s.shuffle_order();
        s
    }

    pub fn from_records(
        records: Vec<CooccurrenceRecord>,
        filter: PositiveFilter,
        buffer_capacity: usize,
        seed: u64,
    ) -> Self {
        PositiveStream {
            source: Source::Memory {
                records,
                position: 0,
            },
            stride: None,
            filter,
            rng: rng::stream(seed, &[0x5EA3]),
            buffer: Vec::new(),
            capacity: buffer_capacity.max(1),
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn shuffle_order(&mut self) {
        if let Source::Files { order, .. } = &mut self.source {
            order.shuffle(&mut self.rng);
        }
    }

    pub fn start_epoch(&mut self) {
        self.epoch += 1;
        self.buffer.clear();
        match &mut self.source {
            Source::Files {
                readers,
                positions,
                exhausted,
                cursor,
                ..
            } => {
                readers.iter_mut().for_each(|r| *r = None);
                positions.iter_mut().for_each(|p| *p = 0);
                exhausted.iter_mut().for_each(|e| *e = false);
                *cursor = 0;
            }
            Source::Memory { position, .. } => *position = 0,
        }
        self.shuffle_order();
    }

    /// Reopens every partly read shard and skips to its recorded position,
    /// after a read failure.
    pub fn resume(&mut self) -> Result<()> {
        if let Source::Files {
            shards,
            readers,
            positions,
            exhausted,
            ..
        } = &mut self.source
        {
            for i in 0..shards.len() {
                if exhausted[i] || positions[i] == 0 {
                    readers[i] = None;
                    continue;
                }
                let mut r = ShardReader::open(&shards[i])?;
                for _ in 0..positions[i] {
                    if r.next().transpose()?.is_none() {
                        break;
                    }
                }
                readers[i] = Some(r);
            }
        }
        Ok(())
    }

    fn next_raw(&mut self) -> Result<Option<CooccurrenceRecord>> {
        match &mut self.source {
            Source::Memory { records, position } => {
                let r = records.get(*position).cloned();
                if r.is_some() {
                    *position += 1;
                }
                Ok(r)
            }
            Source::Files {
                shards,
                order,
                readers,
                positions,
                exhausted,
                cursor,
                last,
            } => {
                for _ in 0..order.len() {
                    let i = order[*cursor];
                    *cursor = (*cursor + 1) % order.len();
                    if exhausted[i] {
                        continue;
                    }
                    if readers[i].is_none() {
                        readers[i] = Some(ShardReader::open(&shards[i])?);
                    }
                    match readers[i].as_mut().and_then(|r| r.next()).transpose()? {
                        Some(r) => {
                            positions[i] += 1;
                            *last = i;
                            return Ok(Some(r));
                        }
                        None => {
                            exhausted[i] = true;
                            readers[i] = None;
                        }
                    }
                }
                Ok(None)
            }
        }
    }

    fn position(&self) -> u64 {
        match &self.source {
            Source::Files {
                positions, last, ..
            } => positions[*last],
            Source::Memory { position, .. } => *position as u64,
        }
    }

    fn refill(&mut self) -> Result<()> {
        while self.buffer.len() < self.capacity {
            let Some(r) = self.next_raw()? else { break };
            if let Some((worker, workers)) = self.stride {
                if (self.position() - 1) % workers != worker {
                    continue;
                }
            }
            if let Some(p) = self.filter.apply(&r) {
                self.buffer.push(p);
            }
        }
        Ok(())
    }

    pub fn next_positive(&mut self) -> Result<Option<Positive>> {
        self.refill()?;
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let j = self.rng.gen_range(0..self.buffer.len());
        Ok(Some(self.buffer.swap_remove(j)))
    }
}

/// Pulls up to `positives` pairs from `stream`, each followed by
/// `negatives_per_positive` negatives that keep the source and draw the
/// destination uniformly from `[0, num_nodes)`.
///
/// Returns `None` when the stream is at the end of its epoch.
pub fn build_batch<R: Rng>(
    stream: &mut PositiveStream,
    positives: usize,
    negatives_per_positive: usize,
    num_nodes: usize,
    rng: &mut R,
) -> Result<Option<Vec<TrainingExample>>> {
    if num_nodes == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut out = Vec::with_capacity(positives * (1 + negatives_per_positive));
    for _ in 0..positives {
        let Some(p) = stream.next_positive()? else {
            break;
        };
        if p.source as usize >= num_nodes || p.destination as usize >= num_nodes {
            return Err(Error::NodeOutOfRange {
                id: u64::from(p.source.max(p.destination)),
                num_nodes,
            });
        }
        out.push(TrainingExample {
            source: p.source,
            destination: p.destination,
            weight: p.weight,
            label: Label::Positive,
        });
        for _ in 0..negatives_per_positive {
            out.push(TrainingExample {
                source: p.source,
                destination: rng.gen_range(0..num_nodes) as NodeId,
                weight: 1.0,
                label: Label::Negative,
            });
        }
    }
    Ok((!out.is_empty()).then_some(out))
}
