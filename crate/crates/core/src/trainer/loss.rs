//! Skip-gram negative-sampling loss with sparse, de-duplicated gradients.
//!
//! For a batch of `B` examples with scores `x = e_src · e_dst`:
//!
//! ```text
//! L = ( Σ_pos w · softplus(-x) + Σ_neg w · softplus(x) ) / B
//! ```
//!
//! where `softplus(z) = log(1 + e^z) = -log σ(-z)`. Negatives carry `w = 1`.

use serde::{Deserialize, Serialize};

use super::batch::{Label, TrainingExample};
use super::table::Rows;
use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Divide loss and gradients by the number of examples.
    #[default]
    Mean,
    /// Plain sum: the learning rate acts per example.
    Sum,
}

/// Gradient rows for the distinct ids of a batch, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrads {
    pub dim: usize,
    pub rows: Vec<NodeId>,
    pub values: Vec<f64>,
}

impl RowGrads {
    fn zeros(rows: Vec<NodeId>, dim: usize) -> Self {
        RowGrads {
            values: vec![0.0; rows.len() * dim],
            rows,
            dim,
        }
    }

    pub fn get(&self, row: NodeId) -> Option<&[f64]> {
        let i = self.rows.binary_search(&row).ok()?;
        Some(&self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.rows
            .iter()
            .copied()
            .zip(self.values.chunks_exact(self.dim.max(1)))
    }

    fn local(&self, row: NodeId) -> usize {
        self.rows.binary_search(&row).expect("row gathered")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad {
    /// Gradient of the (source-role, or only) table.
    pub input: RowGrads,
    /// Gradient of the separate destination table, when one is used.
    pub context: Option<RowGrads>,
    pub examples: usize,
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn unique(ids: impl Iterator<Item = NodeId>) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = ids.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn gather<R: Rows + ?Sized>(table: &R, rows: &[NodeId]) -> Result<Vec<f64>> {
    let dim = table.dim();
    let mut out = vec![0.0; rows.len() * dim];
    for (chunk, &r) in out.chunks_exact_mut(dim.max(1)).zip(rows) {
        table.read_row(r, chunk);
        if chunk.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                row: r,
                message: "embedding row contains NaN or infinity".into(),
            });
        }
    }
    Ok(out)
}

/// Mean-reduced loss and sparse gradient over a single shared table.
pub fn loss_and_grad<R: Rows + ?Sized>(
    table: &R,
    batch: &[TrainingExample],
) -> Result<(f64, SparseGrad)> {
    loss_and_grad_with(table, None, batch, Reduction::Mean)
}

/// Loss and sparse gradient. With `context`, destinations are looked up in
/// that table instead of `input`.
pub fn loss_and_grad_with<R: Rows + ?Sized>(
    input: &R,
    context: Option<&R>,
    batch: &[TrainingExample],
    reduction: Reduction,
) -> Result<(f64, SparseGrad)> {
    let n = input.num_rows();
    let dim = input.dim();
    if let Some(c) = context {
        if c.num_rows() != n || c.dim() != dim {
            return Err(Error::Config(
                "context table shape differs from input".into(),
            ));
        }
    }
    for ex in batch {
        for id in [ex.source, ex.destination] {
            if id as usize >= n {
                return Err(Error::NodeOutOfRange {
                    id: u64::from(id),
                    num_nodes: n,
                });
            }
        }
    }

    let (mut src_grad, mut ctx_grad) = match context {
        None => (
            RowGrads::zeros(
                unique(batch.iter().flat_map(|e| [e.source, e.destination])),
                dim,
            ),
            None,
        ),
        Some(_) => (
            RowGrads::zeros(unique(batch.iter().map(|e| e.source)), dim),
            Some(RowGrads::zeros(
                unique(batch.iter().map(|e| e.destination)),
                dim,
            )),
        ),
    };
    let src_emb = gather(input, &src_grad.rows)?;
    let ctx_emb = match (context, &ctx_grad) {
        (Some(c), Some(g)) => Some(gather(c, &g.rows)?),
        _ => None,
    };

    let scale = match reduction {
        Reduction::Mean if !batch.is_empty() => 1.0 / batch.len() as f64,
        _ => 1.0,
    };
    let mut loss = 0.0;
    for ex in batch {
        let s = src_grad.local(ex.source);
        let es = &src_emb[s * dim..(s + 1) * dim];
        let (d, ed) = match (&ctx_grad, &ctx_emb) {
            (Some(g), Some(emb)) => {
                let d = g.local(ex.destination);
                (d, &emb[d * dim..(d + 1) * dim])
            }
            _ => {
                let d = src_grad.local(ex.destination);
                (d, &src_emb[d * dim..(d + 1) * dim])
            }
        };
        let x: f64 = es.iter().zip(ed).map(|(a, b)| a * b).sum();
        let (l, g) = match ex.label {
            Label::Positive => (ex.weight * softplus(-x), -ex.weight * sigmoid(-x)),
            Label::Negative => (ex.weight * softplus(x), ex.weight * sigmoid(x)),
        };
        if !l.is_finite() {
            return Err(Error::Numeric {
                row: ex.source,
                message: format!(
                    "loss term is {l} for pair ({}, {})",
                    ex.source, ex.destination
                ),
            });
        }
        loss += l;
        let g = g * scale;
        let gs = &mut src_grad.values[s * dim..(s + 1) * dim];
        for (o, v) in gs.iter_mut().zip(ed) {
            *o += g * v;
        }
        let gd = match &mut ctx_grad {
            Some(cg) => &mut cg.values[d * dim..(d + 1) * dim],
            None => &mut src_grad.values[d * dim..(d + 1) * dim],
        };
        for (o, v) in gd.iter_mut().zip(es) {
            *o += g * v;
        }
    }
    loss *= scale;
    if !loss.is_finite() {
        let row = batch.first().map_or(0, |e| e.source);
        return Err(Error::Numeric {
            row,
            message: format!("batch loss is {loss}"),
        });
    }
    Ok((
        loss,
        SparseGrad {
            input: src_grad,
            context: ctx_grad,
            examples: batch.len(),
        },
    ))
}
