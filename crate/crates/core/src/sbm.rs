//! Stochastic block model generator.
//!
//! Nodes are split into `classes` contiguous, balanced blocks (node `i`
//! belongs to block `⌊i·k/n⌋`). Each unordered pair is an edge independently
//! with probability `p_in` inside a block and `p_out` across blocks.
//!
//! Generation walks each block pair's candidate-pair index space with
//! geometric jumps, so the cost is proportional to the number of edges
//! produced. Every block pair draws from its own stream derived from
//! `(seed, a, b)`, which makes parallel and serial output identical.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;

/// Default ceiling on the expected edge count, roughly 4 GiB of edge buffers.
pub const DEFAULT_MAX_EDGES: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
    #[serde(default = "default_max_edges")]
    pub max_edges: u64,
}

fn default_max_edges() -> u64 {
    DEFAULT_MAX_EDGES
}

/// Desk-scale presets: 10 classes, expected average degree 10, and a 10:1
/// within/between density ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SbmPreset {
    #[serde(rename = "sbm-10k")]
    Sbm10K,
    #[serde(rename = "sbm-100k")]
    Sbm100K,
    #[serde(rename = "sbm-1m")]
    Sbm1M,
}

impl SbmPreset {
    pub fn nodes(self) -> usize {
        match self {
            SbmPreset::Sbm10K => 10_000,
            SbmPreset::Sbm100K => 100_000,
            SbmPreset::Sbm1M => 1_000_000,
        }
    }

    pub fn config(self, seed: u64) -> SbmConfig {
        SbmConfig::with_average_degree(self.nodes(), 10, 10.0, 10.0, seed)
    }
}

impl std::str::FromStr for SbmPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sbm-10k" => Ok(SbmPreset::Sbm10K),
            "sbm-100k" => Ok(SbmPreset::Sbm100K),
            "sbm-1m" => Ok(SbmPreset::Sbm1M),
            _ => Err(Error::Config(format!("unknown SBM preset `{s}`"))),
        }
    }
}

impl SbmConfig {
    /// Chooses `p_out` and `p_in = ratio · p_out` so the expected degree is
    /// `avg_degree` under balanced blocks.
    pub fn with_average_degree(
        nodes: usize,
        classes: usize,
        avg_degree: f64,
        ratio: f64,
        seed: u64,
    ) -> Self {
        let block = nodes as f64 / classes as f64;
        let p_out = avg_degree / (ratio * (block - 1.0) + (nodes as f64 - block));
        SbmConfig {
            nodes,
            classes,
            p_in: (ratio * p_out).min(1.0),
            p_out: p_out.min(1.0),
            seed,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Config("SBM needs at least one node".into()));
        }
        if self.nodes > NodeId::MAX as usize {
            return Err(Error::Config("SBM node count exceeds 32-bit ids".into()));
        }
        if self.classes == 0 || self.classes > self.nodes {
            return Err(Error::Config(format!(
                "SBM classes must be in [1, {}], got {}",
                self.nodes, self.classes
            )));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.p_out > self.p_in {
            log::warn!(
                "p_out ({}) exceeds p_in ({}); block structure is disassortative",
                self.p_out,
                self.p_in
            );
        }
        Ok(())
    }

    /// First node of block `a`.
    pub fn block_start(&self, a: usize) -> usize {
        (a * self.nodes).div_ceil(self.classes)
    }

    pub fn class_of(&self, node: usize) -> usize {
        node * self.classes / self.nodes
    }

    fn block_size(&self, a: usize) -> usize {
        self.block_start(a + 1) - self.block_start(a)
    }

    /// Expected number of undirected edges.
    pub fn expected_edges(&self) -> f64 {
        let mut within = 0.0;
        for a in 0..self.classes {
            let s = self.block_size(a) as f64;
            within += s * (s - 1.0) / 2.0;
        }
        let n = self.nodes as f64;
        let all = n * (n - 1.0) / 2.0;
        within * self.p_in + (all - within) * self.p_out
    }
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let expected = cfg.expected_edges();
    if expected > cfg.max_edges as f64 {
        return Err(Error::Capacity {
            expected,
            budget: cfg.max_edges,
        });
    }

    let k = cfg.classes;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let chunks: Vec<Vec<(NodeId, NodeId)>> = pairs
        .par_iter()
        .map(|&(a, b)| block_pair_edges(cfg, a, b))
        .collect();
    let edges = chunks.into_iter().flatten();
    Graph::from_edges(cfg.nodes, edges)
}

fn block_pair_edges(cfg: &SbmConfig, a: usize, b: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    let p = if a == b { cfg.p_in } else { cfg.p_out };
    let (sa, sb) = (cfg.block_start(a), cfg.block_start(b));
    let (na, nb) = (cfg.block_size(a) as u64, cfg.block_size(b) as u64);
    let total = if a == b {
        na * na.saturating_sub(1) / 2
    } else {
        na * nb
    };
    if p <= 0.0 || total == 0 {
        return out;
    }
    let mut rng = rng::stream(cfg.seed, &[a as u64, b as u64]);
    let emit = |t: u64, out: &mut Vec<(NodeId, NodeId)>| {
        let (i, j) = if a == b {
            triangular_pair(t)
        } else {
            (t / nb, t % nb)
        };
        out.push(((sa as u64 + i) as NodeId, (sb as u64 + j) as NodeId));
    };

    if p >= 1.0 {
        for t in 0..total {
            emit(t, &mut out);
        }
        return out;
    }
    let log_q = (1.0 - p).ln();
    let mut t: u64 = 0;
    let mut first = true;
    loop {
        let u: f64 = rng.gen();
        let skip = ((1.0 - u).ln() / log_q).floor();
        let step = if skip >= u64::MAX as f64 {
            u64::MAX
        } else {
            skip as u64
        };
        let advance = if first { step } else { step.saturating_add(1) };
        first = false;
        t = match t.checked_add(advance) {
            Some(t) if t < total => t,
            _ => break,
        };
        emit(t, &mut out);
    }
    out
}

/// Maps a linear index over pairs `(i, j)` with `j < i` to the pair itself,
/// enumerated row by row: (1,0), (2,0), (2,1), (3,0), ...
fn triangular_pair(t: u64) -> (u64, u64) {
    // Largest i with i(i-1)/2 <= t.
    let mut i = ((1.0 + (1.0 + 8.0 * t as f64).sqrt()) / 2.0).floor() as u64;
    while i * (i - 1) / 2 > t {
        i -= 1;
    }
    while (i + 1) * i / 2 <= t {
        i += 1;
    }
    (i, t - i * (i - 1) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nodes: usize, classes: usize, p_in: f64, p_out: f64, seed: u64) -> SbmConfig {
        SbmConfig {
            nodes,
            classes,
            p_in,
            p_out,
            seed,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }

    #[test]
    fn triangular_indexing_enumerates_all_pairs() {
        let mut t = 0;
        for i in 1..60u64 {
            for j in 0..i {
                assert_eq!(triangular_pair(t), (i, j));
                t += 1;
            }
        }
    }

    #[test]
    fn deterministic_probabilities_give_two_cliques() {
        let g = generate_sbm(&cfg(4, 2, 1.0, 0.0, 1)).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(2, 3));
    }

    #[test]
    fn complete_when_both_probabilities_one() {
        let g = generate_sbm(&cfg(7, 3, 1.0, 1.0, 1)).unwrap();
        assert_eq!(g.num_edges(), 21);
    }

    #[test]
    fn balanced_contiguous_blocks() {
        let c = cfg(10, 3, 0.5, 0.1, 0);
        let classes: Vec<usize> = (0..10).map(|i| c.class_of(i)).collect();
        assert_eq!(classes, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        for a in 0..3 {
            assert_eq!(c.class_of(c.block_start(a)), a);
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(generate_sbm(&cfg(3, 4, 0.5, 0.1, 0)).is_err());
        assert!(generate_sbm(&cfg(3, 1, 1.5, 0.1, 0)).is_err());
        assert!(generate_sbm(&cfg(0, 1, 0.5, 0.1, 0)).is_err());
        // disassortative is only a warning
        assert!(generate_sbm(&cfg(5, 1, 0.1, 0.5, 0)).is_ok());
    }

    #[test]
    fn capacity_checked_before_generation() {
        let mut c = cfg(100_000, 1, 0.5, 0.5, 0);
        c.max_edges = 1_000;
        assert!(matches!(generate_sbm(&c), Err(Error::Capacity { .. })));
    }

    #[test]
    fn same_seed_same_graph() {
        let c = cfg(2000, 5, 0.02, 0.002, 11);
        let a = generate_sbm(&c).unwrap();
        let b = generate_sbm(&c).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let other = generate_sbm(&SbmConfig { seed: 12, ..c }).unwrap();
        assert_ne!(a.content_hash(), other.content_hash());
    }

    #[test]
    fn serial_and_parallel_agree() {
        let c = cfg(3000, 6, 0.01, 0.001, 3);
        let par = generate_sbm(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let ser = pool.install(|| generate_sbm(&c).unwrap());
        assert_eq!(par, ser);
    }

    #[test]
    fn preset_average_degree() {
        let c = SbmPreset::Sbm10K.config(0);
        let avg = 2.0 * c.expected_edges() / c.nodes as f64;
        assert!((avg - 10.0).abs() < 1e-9, "{avg}");
        assert!((c.p_in / c.p_out - 10.0).abs() < 1e-9);
    }
}
