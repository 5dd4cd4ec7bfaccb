//! Skip-gram training over co-occurrence records.
//!
//! Two execution modes share the same input pipeline and loss:
//!
//! * [`Mode::Sync`]: `num_replicas` logical replicas each build a micro-batch,
//!   compute sparse gradients independently, and the gradients are summed in
//!   a fixed order before one update of the table. Results do not depend on
//!   the physical thread count.
//! * [`Mode::Async`]: `workers` threads each stream their own batches and
//!   write sparse updates into a shared table with no locking and no
//!   ordering. Concurrent updates to the same entry may be lost.

mod batch;
mod hogwild;
mod loss;
mod schedule;
mod sync;
mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

pub use batch::{build_batch, Label, Positive, PositiveFilter, PositiveStream, TrainingExample};
pub use hogwild::train_async;
pub use loss::{loss_and_grad, loss_and_grad_with, Reduction, RowGrads, SparseGrad};
pub use schedule::{lr_at, LwsgdSchedule};
pub use sync::{apply_sync_step, train_sync};
pub use table::{
    read_checkpoint, write_checkpoint, CheckpointHeader, EmbeddingTable, Rows, Scalar, SharedTable,
    CHECKPOINT_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Lwsgd(LwsgdSchedule),
    FixedSgd { lr: f64 },
}

impl Optimizer {
    pub fn lr_at(&self, step: u64) -> f64 {
        match self {
            Optimizer::Lwsgd(s) => s.lr_at(step),
            Optimizer::FixedSgd { lr } => *lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub dim: usize,
    /// Positives per micro-batch.
    pub per_replica_batch_size: usize,
    pub num_neg_per_pos: usize,
    /// Logical replicas per synchronous step.
    pub num_replicas: usize,
    /// Threads in asynchronous mode.
    pub workers: usize,
    pub optimizer: Optimizer,
    /// Synchronous: global steps. Asynchronous: micro-batches over all workers.
    pub steps: u64,
    pub seed: u64,
    /// Drop positives whose source equals the destination.
    pub self_pair_filter: bool,
    /// Per-distance weight of co-occurrence counts; empty means all ones.
    pub distance_weighting: Vec<f64>,
    /// Separate destination table instead of one shared table.
    pub dual_tables: bool,
    pub shuffle_buffer: usize,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Sync,
            dim: 128,
            per_replica_batch_size: 4096,
            num_neg_per_pos: 31,
            num_replicas: 64,
            workers: 1,
            optimizer: Optimizer::Lwsgd(LwsgdSchedule::default()),
            steps: 105_000,
            seed: 0,
            self_pair_filter: true,
            distance_weighting: Vec::new(),
            dual_tables: false,
            shuffle_buffer: 1 << 16,
            reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    /// Replica-synchronous parameters: 4096 positives × 31 negatives per
    /// replica with the (5K, 0.01, 100K, 0.001) warmup/decay schedule.
    pub fn synchronous_defaults() -> Self {
        TrainConfig::default()
    }

    /// Parameter-server parameters: 1024 positives × 3 negatives per worker
    /// batch with plain SGD at 0.001.
    pub fn asynchronous_defaults() -> Self {
        TrainConfig {
            mode: Mode::Async,
            per_replica_batch_size: 1024,
            num_neg_per_pos: 3,
            num_replicas: 1,
            workers: 8,
            optimizer: Optimizer::FixedSgd { lr: 0.001 },
            reduction: Reduction::Sum,
            ..TrainConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn examples_per_micro_batch(&self) -> usize {
        self.per_replica_batch_size * (1 + self.num_neg_per_pos)
    }

    pub fn global_batch_size(&self) -> usize {
        self.examples_per_micro_batch() * self.num_replicas.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("per_replica_batch_size", self.per_replica_batch_size),
            ("num_replicas", self.num_replicas),
            ("workers", self.workers),
            ("shuffle_buffer", self.shuffle_buffer),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        match self.optimizer {
            Optimizer::Lwsgd(s) => s.validate()?,
            Optimizer::FixedSgd { lr } => {
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(Error::Config(format!(
                        "learning rate {lr} must be positive"
                    )));
                }
            }
        }
        if self
            .distance_weighting
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Config(
                "distance weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn filter(&self) -> PositiveFilter {
        PositiveFilter {
            distance_weighting: self.distance_weighting.clone(),
            drop_self_pairs: self.self_pair_filter,
        }
    }

    /// First eight bytes of SHA-256 over the JSON encoding.
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Seeded initial table for `num_nodes` nodes.
    pub fn initial_table(&self, num_nodes: usize) -> EmbeddingTable<f32> {
        EmbeddingTable::init_uniform(num_nodes, self.dim, rng::derive_seed(self.seed, &[0x1217]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub examples: u64,
    pub examples_per_sec: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable<f32>,
    pub context: Option<EmbeddingTable<f32>>,
    pub log: Vec<StepLog>,
    pub steps: u64,
    pub examples: u64,
    pub elapsed_secs: f64,
}

impl TrainOutcome {
    pub fn examples_per_sec(&self) -> f64 {
        self.examples as f64 / self.elapsed_secs.max(1e-9)
    }

    /// Mean loss over the first and last `fraction` of logged steps.
    pub fn loss_head_tail(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.log.len();
        let k = ((n as f64 * fraction).ceil() as usize).max(1);
        if n < 2 * k {
            return None;
        }
        let mean = |s: &[StepLog]| s.iter().map(|l| l.loss).sum::<f64>() / s.len() as f64;
        Some((mean(&self.log[..k]), mean(&self.log[n - k..])))
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for entry in &self.log {
            let line = serde_json::to_string(entry).expect("log entry serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Trains `table` on the records in `record_paths` in the configured mode.
pub fn train(
    record_paths: &[PathBuf],
    cfg: &TrainConfig,
    table: EmbeddingTable<f32>,
) -> Result<TrainOutcome> {
    match cfg.mode {
        Mode::Sync => train_sync(record_paths, cfg, table),
        Mode::Async => train_async(record_paths, cfg, table),
    }
}

/// Pulls the next micro-batch, rolling over to a new epoch when needed.
pub(crate) fn next_batch<R: rand::Rng>(
    stream: &mut PositiveStream,
    cfg: &TrainConfig,
    num_nodes: usize,
    rng: &mut R,
) -> Result<Vec<TrainingExample>> {
    let positives = cfg.per_replica_batch_size;
    if let Some(b) = build_batch(stream, positives, cfg.num_neg_per_pos, num_nodes, rng)? {
        return Ok(b);
    }
    stream.start_epoch();
    build_batch(stream, positives, cfg.num_neg_per_pos, num_nodes, rng)?
        .ok_or_else(|| Error::Config("a training stream has no positive records".into()))
}
