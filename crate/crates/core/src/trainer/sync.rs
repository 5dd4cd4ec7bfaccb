use std::path::PathBuf;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{loss_and_grad_with, Reduction, RowGrads};
use super::table::{EmbeddingTable, Scalar};
use super::{next_batch, PositiveStream, StepLog, TrainConfig, TrainOutcome, TrainingExample};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rng;

/// Sums per-replica gradient rows in replica order.
fn aggregate<'a>(parts: impl Iterator<Item = &'a RowGrads>, dim: usize) -> RowGrads {
    let parts: Vec<&RowGrads> = parts.collect();
    let mut index: Vec<(NodeId, usize, usize)> = parts
        .iter()
        .enumerate()
        .flat_map(|(r, g)| g.rows.iter().enumerate().map(move |(i, &row)| (row, r, i)))
        .collect();
    index.sort_unstable();
    let mut rows = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row, r, i) in index {
        let src = &parts[r].values[i * dim..(i + 1) * dim];
        if rows.last() != Some(&row) {
            rows.push(row);
            values.extend_from_slice(src);
        } else {
            let start = values.len() - dim;
            for (o, v) in values[start..].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    RowGrads { dim, rows, values }
}

fn apply<T: Scalar>(table: &mut EmbeddingTable<T>, grads: &RowGrads, step_size: f64) {
    for (row, g) in grads.iter() {
        for (v, gi) in table.row_mut(row).iter_mut().zip(g) {
            *v = T::from_f64(v.to_f64() - step_size * gi);
        }
    }
}

/// One synchronous update: every micro-batch's gradient is computed against
/// the same table state, gradients are summed in batch order, and a single
/// step of size `lr` is taken (divided by the total example count under
/// [`Reduction::Mean`]). Returns the mean loss over all examples.
pub fn apply_sync_step<T: Scalar>(
    table: &mut EmbeddingTable<T>,
    context: Option<&mut EmbeddingTable<T>>,
    batches: &[Vec<TrainingExample>],
    lr: f64,
    reduction: Reduction,
) -> Result<f64> {
    let dim = table.dim();
    let results = {
        let input = &*table;
        let ctx = context.as_deref();
        batches
            .par_iter()
            .map(|b| loss_and_grad_with(input, ctx, b, Reduction::Sum))
            .collect::<Result<Vec<_>>>()?
    };
    let total: usize = results.iter().map(|(_, g)| g.examples).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let loss_sum: f64 = results.iter().map(|(l, _)| l).sum();
    let scale = match reduction {
        Reduction::Mean => 1.0 / total as f64,
        Reduction::Sum => 1.0,
    };
    let input_grad = aggregate(results.iter().map(|(_, g)| &g.input), dim);
    apply(table, &input_grad, lr * scale);
    if let Some(ctx) = context {
        let ctx_grad = aggregate(results.iter().filter_map(|(_, g)| g.context.as_ref()), dim);
        apply(ctx, &ctx_grad, lr * scale);
    }
    Ok(loss_sum / total as f64)
}

struct Replica {
    stream: PositiveStream,
    negatives: ChaCha8Rng,
}

/// Replica-synchronous training. Deterministic for a fixed seed regardless
/// of the number of threads.
pub fn train_sync(
    record_paths: &[PathBuf],
    cfg: &TrainConfig,
    mut table: EmbeddingTable<f32>,
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
    let replicas = cfg.num_replicas;
    let mut states: Vec<Replica> = (0..replicas)
        .map(|r| Replica {
            stream: PositiveStream::for_worker(
                record_paths,
                r,
                replicas,
                cfg.filter(),
                cfg.shuffle_buffer,
                cfg.seed,
            ),
            negatives: rng::stream(cfg.seed, &[0x0E6, r as u64]),
        })
        .collect();
    let mut context = cfg
        .dual_tables
        .then(|| EmbeddingTable::<f32>::zeros(n, cfg.dim));

    log::info!(
        "sync training: {} replicas × {} examples = global batch {}",
        replicas,
        cfg.examples_per_micro_batch(),
        cfg.global_batch_size()
    );
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.steps as usize);
    let mut examples = 0u64;
    for step in 0..cfg.steps {
        let step_start = Instant::now();
        let batches = states
            .par_iter_mut()
            .map(|s| next_batch(&mut s.stream, cfg, n, &mut s.negatives))
            .collect::<Result<Vec<_>>>()?;
        let lr = cfg.optimizer.lr_at(step);
        let loss = apply_sync_step(&mut table, context.as_mut(), &batches, lr, cfg.reduction)?;
        let step_examples: u64 = batches.iter().map(|b| b.len() as u64).sum();
        examples += step_examples;
        log.push(StepLog {
            step,
            lr,
            loss,
            examples: step_examples,
            examples_per_sec: step_examples as f64 / step_start.elapsed().as_secs_f64().max(1e-9),
        });
        if step % 500 == 0 {
            log::debug!("step {step}: lr {lr:.5} loss {loss:.5}");
        }
    }
    if let Some(row) = table.first_non_finite_row() {
        return Err(Error::Numeric {
            row,
            message: "table diverged during training".into(),
        });
    }
    Ok(TrainOutcome {
        table,
        context,
        log,
        steps: cfg.steps,
        examples,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
