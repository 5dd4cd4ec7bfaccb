use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::loss::{loss_and_grad_with, Reduction};
use super::table::{EmbeddingTable, SharedTable};
use super::{next_batch, PositiveStream, StepLog, TrainConfig, TrainOutcome, TrainingExample};
use crate::error::{Error, Result};
use crate::rng;

const MAX_RESTARTS: usize = 3;

struct Shared<'a> {
    input: &'a SharedTable,
    context: Option<&'a SharedTable>,
    step: &'a AtomicU64,
    num_nodes: usize,
}

fn is_io(e: &Error) -> bool {
    matches!(e, Error::Io { .. } | Error::ShardIo { .. })
}

fn run_worker(
    worker: usize,
    steps: u64,
    record_paths: &[PathBuf],
    cfg: &TrainConfig,
    shared: &Shared<'_>,
) -> Result<Vec<StepLog>> {
    let mut stream = PositiveStream::for_worker(
        record_paths,
        worker,
        cfg.workers,
        cfg.filter(),
        cfg.shuffle_buffer,
        cfg.seed,
    );
    let mut negatives = rng::stream(cfg.seed, &[0x0E6, worker as u64]);
    let mut log = Vec::with_capacity(steps as usize);
    let mut restarts = 0;

    let mut done = 0;
    while done < steps {
        let t0 = Instant::now();
        let batch: Vec<TrainingExample> =
            match next_batch(&mut stream, cfg, shared.num_nodes, &mut negatives) {
                Ok(b) => b,
                Err(e) if is_io(&e) && restarts < MAX_RESTARTS => {
                    restarts += 1;
                    log::warn!("worker {worker}: {e}; resuming stream ({restarts}/{MAX_RESTARTS})");
                    stream.resume()?;
                    continue;
                }
                Err(e) => return Err(e),
            };
        let (loss, grad) = loss_and_grad_with(shared.input, shared.context, &batch, cfg.reduction)?;
        let step = shared.step.fetch_add(1, Ordering::Relaxed);
        let lr = cfg.optimizer.lr_at(step);
        for (row, g) in grad.input.iter() {
            shared.input.add_scaled(row, -lr, g);
        }
        if let (Some(ctx), Some(cg)) = (shared.context, &grad.context) {
            for (row, g) in cg.iter() {
                ctx.add_scaled(row, -lr, g);
            }
        }
        let mean_loss = match cfg.reduction {
            Reduction::Mean => loss,
            Reduction::Sum => loss / batch.len() as f64,
        };
        log.push(StepLog {
            step,
            lr,
            loss: mean_loss,
            examples: batch.len() as u64,
            examples_per_sec: batch.len() as f64 / t0.elapsed().as_secs_f64().max(1e-9),
        });
        done += 1;
    }
    Ok(log)
}

/// Asynchronous lock-free training: `cfg.workers` threads share one table
/// and apply their sparse updates as soon as they are computed.
///
/// With a single worker this is plain sequential SGD and bitwise
/// reproducible; with more, lost updates make runs nondeterministic.
pub fn train_async(
    record_paths: &[PathBuf],
    cfg: &TrainConfig,
    table: EmbeddingTable<f32>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if table.dim() != cfg.dim {
        return Err(Error::Config(format!(
            "table dimension {} differs from configured {}",
            table.dim(),
            cfg.dim
        )));
    }
    let n = table.num_nodes();
    let input = SharedTable::new(table);
    let context = cfg
        .dual_tables
        .then(|| SharedTable::new(EmbeddingTable::zeros(n, cfg.dim)));
    let step = AtomicU64::new(0);
    let shared = Shared {
        input: &input,
        context: context.as_ref(),
        step: &step,
        num_nodes: n,
    };

    let workers = cfg.workers as u64;
    let start = Instant::now();
    let results: Vec<Result<Vec<StepLog>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|w| {
                let steps = cfg.steps / workers + u64::from((w as u64) < cfg.steps % workers);
                let shared = &shared;
                s.spawn(move || run_worker(w, steps, record_paths, cfg, shared))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect()
    });
    let elapsed = start.elapsed().as_secs_f64();

    let mut log = Vec::with_capacity(cfg.steps as usize);
    for r in results {
        log.extend(r?);
    }
    log.sort_by_key(|l| l.step);
    let examples = log.iter().map(|l| l.examples).sum();

    let table = input.into_table();
    if let Some(row) = table.first_non_finite_row() {
        return Err(Error::Numeric {
            row,
            message: "table diverged during training".into(),
        });
    }
    Ok(TrainOutcome {
        table,
        context: context.map(SharedTable::into_table),
        log,
        steps: cfg.steps,
        examples,
        elapsed_secs: elapsed,
    })
}
