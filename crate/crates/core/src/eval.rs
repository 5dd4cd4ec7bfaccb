//! Label-free embedding quality metrics.
//!
//! All metrics operate on L2-normalized embeddings:
//!
//! * **edge SNR**: mean non-edge distance over mean edge distance. Non-edges
//!   are sampled uniformly with replacement (rejecting edges and self-pairs);
//!   edges are used exhaustively up to a cap.
//! * **distance percentiles**: nearest-rank P0..P100 of edge and non-edge
//!   distances.
//! * **edge recall**: for sampled nodes `u` with `k = deg(u)`, the fraction of
//!   the `k` nearest nodes (ties broken by node id) that are neighbors of `u`.
//!
//! Reports are written as `report.json` plus CSV tables with a `Quantiles`
//! column in `[0, 1]` and one value column named after the run label.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::trainer::{EmbeddingTable, Scalar};

/// Reported in place of an SNR whose mean edge distance is below 1e-12.
pub const SNR_CAP: f64 = 1e12;
const MIN_EDGE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// `1 - cos`, also in `[0, 2]`.
    Cosine,
}

impl DistanceMetric {
    #[inline]
    pub fn distance<T: Scalar>(self, a: &[T], b: &[T]) -> f64 {
        match self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x.to_f64() - y.to_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x.to_f64() * y.to_f64()).sum();
                (1.0 - dot).clamp(0.0, 2.0)
            }
        }
    }
}

/// Scales every nonzero row to unit length; zero rows stay zero and are
/// counted in the returned total.
pub fn l2_normalize<T: Scalar>(table: &EmbeddingTable<T>) -> (EmbeddingTable<T>, usize) {
    let mut out = table.clone();
    let mut zero_rows = 0;
    for u in 0..out.num_nodes() as NodeId {
        let row = out.row_mut(u);
        let norm = row
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            zero_rows += 1;
            continue;
        }
        for v in row.iter_mut() {
            *v = T::from_f64(v.to_f64() / norm);
        }
    }
    if zero_rows > 0 {
        log::warn!("{zero_rows} embedding rows are zero and were left unnormalized");
    }
    (out, zero_rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub non_edge_samples: usize,
    pub recall_nodes: usize,
    /// Edges beyond this count are subsampled uniformly for the SNR denominator.
    pub edge_cap: usize,
    pub seed: u64,
    pub metric: DistanceMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            non_edge_samples: 10_000,
            recall_nodes: 100,
            edge_cap: 100_000_000,
            seed: 0,
            metric: DistanceMetric::Euclidean,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.non_edge_samples == 0 {
            return Err(Error::Config("non_edge_samples must be at least 1".into()));
        }
        if self.edge_cap == 0 {
            return Err(Error::Config("edge_cap must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_shape<T: Scalar>(g: &Graph, table: &EmbeddingTable<T>) -> Result<()> {
    if table.num_nodes() != g.num_nodes() {
        return Err(Error::Config(format!(
            "embedding has {} rows but the graph has {} nodes",
            table.num_nodes(),
            g.num_nodes()
        )));
    }
    Ok(())
}

/// Uniform node pairs that are neither edges nor self-pairs.
pub fn sample_non_edges(g: &Graph, count: usize, seed: u64) -> Result<Vec<(NodeId, NodeId)>> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::UndefinedMetric("fewer than two nodes".into()));
    }
    let mut rng = rng::stream(seed, &[0x90E]);
    let mut out = Vec::with_capacity(count);
    let budget = 100 * count as u64 + 10_000;
    let mut attempts = 0u64;
    while out.len() < count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::UndefinedMetric(
                "graph too dense to sample non-edges".into(),
            ));
        }
        let u = rng.gen_range(0..n) as NodeId;
        let v = rng.gen_range(0..n) as NodeId;
        if u != v && !g.has_edge(u, v) {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// All edges, or `cap` edges drawn uniformly with replacement when the
/// graph has more than `cap`.
pub fn edge_pairs(g: &Graph, cap: usize, seed: u64) -> Vec<(NodeId, NodeId)> {
    if g.num_edges() <= cap {
        return g.edges().collect();
    }
    let mut rng = rng::stream(seed, &[0xED6E]);
    let offsets = g.offsets();
    let slots = g.raw_neighbors();
    (0..cap)
        .map(|_| {
            let slot = rng.gen_range(0..slots.len()) as u64;
            let u = offsets.partition_point(|&o| o <= slot) - 1;
            (u as NodeId, slots[slot as usize])
        })
        .collect()
}

pub fn pair_distances<T: Scalar>(
    pairs: &[(NodeId, NodeId)],
    table: &EmbeddingTable<T>,
    metric: DistanceMetric,
) -> Vec<f64> {
    pairs
        .par_iter()
        .map(|&(u, v)| metric.distance(table.row(u), table.row(v)))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn snr_from_means(non_edge: f64, edge: f64) -> f64 {
    if edge < MIN_EDGE_DISTANCE {
        SNR_CAP
    } else {
        (non_edge / edge).min(SNR_CAP)
    }
}

/// Edge signal-to-noise ratio of an already normalized table.
pub fn edge_snr<T: Scalar>(
    g: &Graph,
    table: &EmbeddingTable<T>,
    non_edge_samples: usize,
    seed: u64,
) -> Result<f64> {
    edge_snr_with(
        g,
        table,
        non_edge_samples,
        usize::MAX,
        seed,
        DistanceMetric::Euclidean,
    )
}

pub fn edge_snr_with<T: Scalar>(
    g: &Graph,
    table: &EmbeddingTable<T>,
    non_edge_samples: usize,
    edge_cap: usize,
    seed: u64,
    metric: DistanceMetric,
) -> Result<f64> {
    check_shape(g, table)?;
    if g.num_edges() == 0 {
        return Err(Error::UndefinedMetric("graph has no edges".into()));
    }
    if non_edge_samples == 0 {
        return Err(Error::Config("non_edge_samples must be at least 1".into()));
    }
    let edges = pair_distances(&edge_pairs(g, edge_cap, seed), table, metric);
    let non_edges = pair_distances(&sample_non_edges(g, non_edge_samples, seed)?, table, metric);
    Ok(snr_from_means(mean(&non_edges), mean(&edges)))
}

/// Nearest-rank percentiles P0..P100.
pub fn percentiles(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("no values for percentiles".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok((0..=100)
        .map(|p| {
            let rank = (p * n).div_ceil(100);
            sorted[rank.max(1) - 1]
        })
        .collect())
}

pub fn distance_percentiles<T: Scalar>(
    pairs: &[(NodeId, NodeId)],
    table: &EmbeddingTable<T>,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    percentiles(&pair_distances(pairs, table, metric))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    /// `(node, recall)` in sampling order.
    pub per_node: Vec<(NodeId, f64)>,
    /// Draws rejected because the node had no neighbors.
    pub resampled: usize,
}

impl RecallResult {
    pub fn values(&self) -> Vec<f64> {
        self.per_node.iter().map(|&(_, r)| r).collect()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values())
    }
}

/// Recall@deg(u) of `u` against exact nearest neighbors.
pub fn node_recall<T: Scalar>(
    g: &Graph,
    table: &EmbeddingTable<T>,
    u: NodeId,
    metric: DistanceMetric,
) -> f64 {
    let k = g.degree(u);
    if k == 0 {
        return 0.0;
    }
    let ru = table.row(u);
    let mut cand: Vec<(f64, NodeId)> = (0..g.num_nodes() as NodeId)
        .filter(|&v| v != u)
        .map(|v| (metric.distance(ru, table.row(v)), v))
        .collect();
    let by_dist_then_id =
        |a: &(f64, NodeId), b: &(f64, NodeId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist_then_id);
    }
    let hits = cand[..k.min(cand.len())]
        .iter()
        .filter(|&&(_, v)| g.has_edge(u, v))
        .count();
    hits as f64 / k as f64
}

/// Samples up to `num_sampled` distinct nodes with at least one neighbor and
/// computes their recall.
pub fn edge_recall<T: Scalar>(
    g: &Graph,
    table: &EmbeddingTable<T>,
    num_sampled: usize,
    seed: u64,
    metric: DistanceMetric,
) -> Result<RecallResult> {
    check_shape(g, table)?;
    let n = g.num_nodes();
    let eligible = (0..n as NodeId).filter(|&u| g.degree(u) > 0).count();
    if eligible == 0 {
        return Err(Error::UndefinedMetric("no node has neighbors".into()));
    }
    let target = num_sampled.min(eligible);
    let mut rng = rng::stream(seed, &[0x2ECA]);
    let mut chosen: Vec<NodeId> = Vec::with_capacity(target);
    let mut seen = std::collections::HashSet::new();
    let mut resampled = 0;
    while chosen.len() < target {
        let u = rng.gen_range(0..n) as NodeId;
        if g.degree(u) == 0 {
            resampled += 1;
            continue;
        }
        if seen.insert(u) {
            chosen.push(u);
        }
    }
    let per_node = chosen
        .par_iter()
        .map(|&u| (u, node_recall(g, table, u, metric)))
        .collect();
    Ok(RecallResult {
        per_node,
        resampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub edge_snr: f64,
    pub mean_edge_distance: f64,
    pub mean_non_edge_distance: f64,
    pub edge_distance_percentiles: Vec<f64>,
    pub non_edge_distance_percentiles: Vec<f64>,
    pub recall_percentiles: Vec<f64>,
    pub mean_recall: f64,
    pub edges_evaluated: usize,
    pub non_edge_samples: usize,
    pub recall_nodes: usize,
    pub recall_resampled: usize,
    pub zero_rows: usize,
}

/// Normalizes `table` and computes every metric.
pub fn evaluate<T: Scalar>(
    g: &Graph,
    table: &EmbeddingTable<T>,
    cfg: &EvalConfig,
    label: &str,
) -> Result<MetricsReport> {
    cfg.validate()?;
    check_shape(g, table)?;
    if g.num_edges() == 0 {
        return Err(Error::UndefinedMetric("graph has no edges".into()));
    }
    let (norm, zero_rows) = l2_normalize(table);
    let edges = pair_distances(&edge_pairs(g, cfg.edge_cap, cfg.seed), &norm, cfg.metric);
    let non_edges = pair_distances(
        &sample_non_edges(g, cfg.non_edge_samples, cfg.seed)?,
        &norm,
        cfg.metric,
    );
    let recall = edge_recall(g, &norm, cfg.recall_nodes, cfg.seed, cfg.metric)?;
    let (me, mn) = (mean(&edges), mean(&non_edges));
    Ok(MetricsReport {
        label: label.to_string(),
        metric: cfg.metric,
        seed: cfg.seed,
        edge_snr: snr_from_means(mn, me),
        mean_edge_distance: me,
        mean_non_edge_distance: mn,
        edge_distance_percentiles: percentiles(&edges)?,
        non_edge_distance_percentiles: percentiles(&non_edges)?,
        recall_percentiles: percentiles(&recall.values())?,
        mean_recall: recall.mean(),
        edges_evaluated: edges.len(),
        non_edge_samples: non_edges.len(),
        recall_nodes: recall.per_node.len(),
        recall_resampled: recall.resampled,
        zero_rows,
    })
}

pub const REPORT_FILE: &str = "report.json";
pub const EDGE_CSV: &str = "edge_distance.csv";
pub const NON_EDGE_CSV: &str = "non_edge_distance.csv";
pub const RECALL_CSV: &str = "recall.csv";

/// Percentile table with a `Quantiles` column and one column per series.
pub fn percentile_csv(series: &[(&str, &[f64])]) -> String {
    let mut s = String::from("Quantiles");
    for (name, _) in series {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for p in 0..=100 {
        let _ = write!(s, "{}", p as f64 / 100.0);
        for (_, values) in series {
            let _ = write!(s, ",{}", values[p]);
        }
        s.push('\n');
    }
    s
}

/// Writes `report.json` and the three percentile CSVs into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(
        REPORT_FILE,
        serde_json::to_string_pretty(report).expect("report serializes"),
    )?;
    let label = report.label.as_str();
    write(
        EDGE_CSV,
        percentile_csv(&[(label, &report.edge_distance_percentiles)]),
    )?;
    write(
        NON_EDGE_CSV,
        percentile_csv(&[(label, &report.non_edge_distance_percentiles)]),
    )?;
    write(
        RECALL_CSV,
        percentile_csv(&[(label, &report.recall_percentiles)]),
    )
}

pub fn read_report(dir: &Path) -> Result<MetricsReport> {
    let p = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))
}
