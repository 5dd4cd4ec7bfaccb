//! Undirected graphs in compressed sparse row layout.
//!
//! A [`Graph`] is immutable once built. Every constructor symmetrizes the
//! edge set, drops self-loops and duplicate edges, and sorts each neighbor
//! list, so all readers may rely on those invariants.
//!
//! # Binary CSR cache layout
//!
//! All integers little-endian:
//!
//! ```text
//! magic        8 bytes   b"WEMBCSR1"
//! num_nodes    u64
//! num_edges    u64       undirected edge count
//! flags        u64       bit 0: external id table present
//! offsets      u64 × (num_nodes + 1)
//! neighbors    u32 × (2 · num_edges)
//! external_ids u64 × num_nodes   (only when flags bit 0 is set)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type NodeId = u32;

pub const CSR_MAGIC: &[u8; 8] = b"WEMBCSR1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeListFormat {
    /// Whitespace separated.
    #[default]
    Tsv,
    /// Comma separated.
    Csv,
}

impl EdgeListFormat {
    fn separator(self) -> char {
        match self {
            EdgeListFormat::Tsv => '\t',
            EdgeListFormat::Csv => ',',
        }
    }

    /// Guesses the format from a file extension; anything other than `.csv` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => EdgeListFormat::Csv,
            _ => EdgeListFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<u64>,
    neighbors: Vec<NodeId>,
    /// Original id of each dense node; `None` means the identity mapping.
    external_ids: Option<Vec<u64>>,
}

impl Graph {
    /// Builds a graph on `num_nodes` dense nodes from arbitrary (possibly
    /// duplicated, one-directional, or self-looping) edges.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if num_nodes > NodeId::MAX as usize {
            return Err(Error::Config(format!(
                "{num_nodes} nodes exceeds the 32-bit node id space"
            )));
        }
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id as usize >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        id: u64::from(id),
                        num_nodes,
                    });
                }
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0u64; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(Graph {
            offsets,
            neighbors,
            external_ids: None,
        })
    }

    pub(crate) fn with_external_ids(mut self, ids: Vec<u64>) -> Self {
        debug_assert_eq!(ids.len(), self.num_nodes());
        let identity = ids.iter().enumerate().all(|(i, &id)| i as u64 == id);
        self.external_ids = if identity { None } else { Some(ids) };
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn degree(&self, u: NodeId) -> usize {
        let u = u as usize;
        (self.offsets[u + 1] - self.offsets[u]) as usize
    }

    /// Sorted neighbors of `u`.
    pub fn neighbors(&self, u: NodeId) -> Result<&[NodeId]> {
        if u as usize >= self.num_nodes() {
            return Err(Error::NodeOutOfRange {
                id: u64::from(u),
                num_nodes: self.num_nodes(),
            });
        }
        Ok(self.neighbors_of(u))
    }

    /// Unchecked variant of [`Graph::neighbors`]; panics on an out-of-range id.
    #[inline]
    pub fn neighbors_of(&self, u: NodeId) -> &[NodeId] {
        let u = u as usize;
        &self.neighbors[self.offsets[u] as usize..self.offsets[u + 1] as usize]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        (u as usize) < self.num_nodes() && self.neighbors_of(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes() as NodeId).flat_map(move |u| {
            self.neighbors_of(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    pub fn external_id(&self, u: NodeId) -> u64 {
        match &self.external_ids {
            Some(ids) => ids[u as usize],
            None => u64::from(u),
        }
    }

    pub fn external_ids(&self) -> Option<&[u64]> {
        self.external_ids.as_deref()
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn raw_neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    /// SHA-256 over the CSR arrays and id table, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_nodes() as u64).to_le_bytes());
        for o in &self.offsets {
            h.update(o.to_le_bytes());
        }
        for n in &self.neighbors {
            h.update(n.to_le_bytes());
        }
        if let Some(ids) = &self.external_ids {
            for id in ids {
                h.update(id.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads an edge list: one edge per line, ids separated by whitespace or
/// commas, an optional third (weight) column ignored, `#` lines skipped.
///
/// External ids are remapped to dense indices in ascending id order.
pub fn load_edge_list(path: impl AsRef<Path>, _format: EdgeListFormat) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(format!(
                "expected 2 or 3 fields, found {}",
                fields.len()
            )));
        }
        let parse_id = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(format!("invalid node id `{s}`")))
        };
        let u = parse_id(fields[0])?;
        let v = parse_id(fields[1])?;
        if let Some(w) = fields.get(2) {
            w.parse::<f64>()
                .map_err(|_| parse_err(format!("invalid weight `{w}`")))?;
        }
        raw.push((u, v));
    }

    let mut ids: Vec<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let dense = |id: u64| ids.binary_search(&id).expect("id collected above") as NodeId;
    let edges: Vec<(NodeId, NodeId)> = raw.iter().map(|&(u, v)| (dense(u), dense(v))).collect();
    let g = Graph::from_edges(ids.len(), edges)?;
    Ok(g.with_external_ids(ids))
}

/// Writes `g` as an edge list using external ids. Isolated nodes are written
/// as self-loop lines so that reloading reproduces the same node set.
pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>, format: EdgeListFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let sep = format.separator();
    let io = |e| Error::io(path, e);
    for u in 0..g.num_nodes() as NodeId {
        let eu = g.external_id(u);
        if g.degree(u) == 0 {
            writeln!(w, "{eu}{sep}{eu}").map_err(io)?;
        }
        for &v in g.neighbors_of(u).iter().filter(|&&v| v > u) {
            writeln!(w, "{eu}{sep}{}", g.external_id(v)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_csr(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CSR_MAGIC).map_err(io)?;
    let flags: u64 = u64::from(g.external_ids.is_some());
    for x in [g.num_nodes() as u64, g.num_edges() as u64, flags] {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    for o in &g.offsets {
        w.write_all(&o.to_le_bytes()).map_err(io)?;
    }
    for n in &g.neighbors {
        w.write_all(&n.to_le_bytes()).map_err(io)?;
    }
    if let Some(ids) = &g.external_ids {
        for id in ids {
            w.write_all(&id.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_csr(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CSR_MAGIC {
        return Err(Error::format(path, "bad CSR magic"));
    }
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut u64buf).map_err(io)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let num_nodes = read_u64(&mut r)? as usize;
    let num_edges = read_u64(&mut r)? as usize;
    let flags = read_u64(&mut r)?;
    if num_nodes == 0 {
        return Err(Error::EmptyGraph);
    }

    let mut offsets = Vec::with_capacity(num_nodes + 1);
    for _ in 0..=num_nodes {
        offsets.push(read_u64(&mut r)?);
    }
    let mut neighbors = Vec::with_capacity(2 * num_edges);
    let mut u32buf = [0u8; 4];
    for _ in 0..2 * num_edges {
        r.read_exact(&mut u32buf).map_err(io)?;
        neighbors.push(u32::from_le_bytes(u32buf));
    }
    let external_ids = if flags & 1 == 1 {
        let mut ids = Vec::with_capacity(num_nodes);
        for _ in 0..num_nodes {
            ids.push(read_u64(&mut r)?);
        }
        Some(ids)
    } else {
        None
    };

    let g = Graph {
        offsets,
        neighbors,
        external_ids,
    };
    validate(&g).map_err(|m| Error::format(path, m))?;
    Ok(g)
}

fn validate(g: &Graph) -> std::result::Result<(), String> {
    let n = g.num_nodes();
    if g.offsets[0] != 0 || *g.offsets.last().unwrap() as usize != g.neighbors.len() {
        return Err("offset array does not span the neighbor array".into());
    }
    for u in 0..n as NodeId {
        if g.offsets[u as usize] > g.offsets[u as usize + 1] {
            return Err(format!("offsets decrease at node {u}"));
        }
        let nbrs = g.neighbors_of(u);
        if nbrs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("neighbors of {u} not strictly sorted"));
        }
        for &v in nbrs {
            if v as usize >= n || v == u || !g.has_edge(v, u) {
                return Err(format!("edge ({u}, {v}) breaks symmetry or range"));
            }
        }
    }
    Ok(())
}

/// Loads either a binary CSR cache (detected by magic) or a text edge list.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let mut magic = [0u8; 8];
    let is_csr = File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_exact(&mut magic)
        .is_ok()
        && &magic == CSR_MAGIC;
    if is_csr {
        read_csr(path)
    } else {
        load_edge_list(path, EdgeListFormat::from_path(path))
    }
}

/// Keeps exactly the nodes of `g` with degree at least `min_degree` and the
/// edges among them. Applied once: survivors whose degree drops below the
/// threshold as a result are kept.
pub fn prune_low_degree(g: &Graph, min_degree: usize) -> Result<Graph> {
    let n = g.num_nodes();
    let mut remap = vec![NodeId::MAX; n];
    let mut kept_ids = Vec::new();
    for u in 0..n as NodeId {
        if g.degree(u) >= min_degree {
            remap[u as usize] = kept_ids.len() as NodeId;
            kept_ids.push(g.external_id(u));
        }
    }
    if kept_ids.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let edges = g.edges().filter_map(|(u, v)| {
        let (ru, rv) = (remap[u as usize], remap[v as usize]);
        (ru != NodeId::MAX && rv != NodeId::MAX).then_some((ru, rv))
    });
    let pruned = Graph::from_edges(kept_ids.len(), edges)?;
    Ok(pruned.with_external_ids(kept_ids))
}
