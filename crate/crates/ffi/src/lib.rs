//! C ABI over `walkembed`.
//!
//! Every fallible function returns a [`WeStatus`]; on failure a message is
//! kept per thread and can be read with [`we_last_error_message`]. Graphs and
//! embeddings cross the boundary as opaque handles that must be released with
//! their `*_free` function. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use walkembed::eval;
use walkembed::graph::{self, Graph};
use walkembed::pipeline::{self, PipelineConfig};
use walkembed::records::RecordManifest;
use walkembed::sampler::{self, SamplerConfig};
use walkembed::sbm::{self, SbmConfig};
use walkembed::trainer::{self, EmbeddingTable, TrainConfig};
use walkembed::Error;

/// Result codes. `WE_OK` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeStatus {
    WeOk = 0,
    WeErrNullPointer = 1,
    WeErrInvalidUtf8 = 2,
    WeErrConfig = 3,
    WeErrParse = 4,
    WeErrIo = 5,
    WeErrFormat = 6,
    WeErrOutOfRange = 7,
    WeErrEmptyGraph = 8,
    WeErrCapacity = 9,
    WeErrNumeric = 10,
    WeErrUndefinedMetric = 11,
    WeErrBufferTooSmall = 12,
    WeErrPanic = 13,
}

/// Opaque graph handle.
pub struct WeGraph(Graph);

/// Opaque embedding table handle.
pub struct WeEmbedding(EmbeddingTable<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WeStatus {
    match e {
        Error::Io { .. } | Error::ShardIo { .. } | Error::MissingReport(_) => WeStatus::WeErrIo,
        Error::Parse { .. } => WeStatus::WeErrParse,
        Error::Format { .. } => WeStatus::WeErrFormat,
        Error::EmptyGraph => WeStatus::WeErrEmptyGraph,
        Error::NodeOutOfRange { .. } => WeStatus::WeErrOutOfRange,
        Error::Config(_) => WeStatus::WeErrConfig,
        Error::Capacity { .. } => WeStatus::WeErrCapacity,
        Error::Numeric { .. } => WeStatus::WeErrNumeric,
        Error::UndefinedMetric(_) => WeStatus::WeErrUndefinedMetric,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Failure(WeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WeStatus::WeOk,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            WeStatus::WeErrPanic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(WeStatus::WeErrNullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WeStatus::WeErrInvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn we_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn we_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an edge list (TSV/CSV) or binary CSR file, detected by content.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_graph_load(path: *const c_char, out: *mut *mut WeGraph) -> WeStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let g = graph::load_graph(path)?;
        *out = Box::into_raw(Box::new(WeGraph(g)));
        Ok(())
    })
}

/// Builds a graph from `num_edges` endpoint pairs over dense ids
/// `0..num_nodes`. Duplicates and self-loops are dropped.
///
/// # Safety
/// `src` and `dst` must point to `num_edges` readable values each (they may
/// be NULL when `num_edges` is zero); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_graph_from_edges(
    num_nodes: u64,
    src: *const u32,
    dst: *const u32,
    num_edges: usize,
    out: *mut *mut WeGraph,
) -> WeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (src, dst) = if num_edges == 0 {
            (&[][..], &[][..])
        } else {
            if src.is_null() {
                return Err(null("src"));
            }
            if dst.is_null() {
                return Err(null("dst"));
            }
            (
                std::slice::from_raw_parts(src, num_edges),
                std::slice::from_raw_parts(dst, num_edges),
            )
        };
        let g = Graph::from_edges(
            num_nodes as usize,
            src.iter().copied().zip(dst.iter().copied()),
        )?;
        *out = Box::into_raw(Box::new(WeGraph(g)));
        Ok(())
    })
}

/// Generates a stochastic block model graph with `classes` balanced
/// contiguous blocks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_graph_generate_sbm(
    nodes: u64,
    classes: u64,
    p_in: f64,
    p_out: f64,
    seed: u64,
    out: *mut *mut WeGraph,
) -> WeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = sbm::generate_sbm(&SbmConfig {
            nodes: nodes as usize,
            classes: classes as usize,
            p_in,
            p_out,
            seed,
            max_edges: sbm::DEFAULT_MAX_EDGES,
        })?;
        *out = Box::into_raw(Box::new(WeGraph(g)));
        Ok(())
    })
}

/// One-pass removal of nodes with degree below `min_degree`, as a new graph.
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_graph_prune(
    g: *const WeGraph,
    min_degree: u64,
    out: *mut *mut WeGraph,
) -> WeStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        let out = out_arg(out, "out")?;
        let pruned = graph::prune_low_degree(&g.0, min_degree as usize)?;
        *out = Box::into_raw(Box::new(WeGraph(pruned)));
        Ok(())
    })
}

/// Node count, or 0 for a NULL handle.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn we_graph_num_nodes(g: *const WeGraph) -> u64 {
    g.as_ref().map_or(0, |g| g.0.num_nodes() as u64)
}

/// Undirected edge count, or 0 for a NULL handle.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn we_graph_num_edges(g: *const WeGraph) -> u64 {
    g.as_ref().map_or(0, |g| g.0.num_edges() as u64)
}

/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_graph_degree(g: *const WeGraph, node: u32, out: *mut u64) -> WeStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        let out = out_arg(out, "out")?;
        *out = g.0.neighbors(node)?.len() as u64;
        Ok(())
    })
}

/// Writes the graph as binary CSR.
///
/// # Safety
/// `g` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn we_graph_write_csr(g: *const WeGraph, path: *const c_char) -> WeStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        let path = str_arg(path, "path")?;
        graph::write_csr(&g.0, path)?;
        Ok(())
    })
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn we_graph_free(g: *mut WeGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Samples co-occurrence records into shards under `out_dir` and reports
/// the record count.
///
/// # Safety
/// `g` must be a live handle, `out_dir` a valid NUL-terminated string and
/// `out_records` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_sample(
    g: *const WeGraph,
    gamma: u32,
    walk_length: u32,
    num_shards: u64,
    seed: u64,
    out_dir: *const c_char,
    out_records: *mut u64,
) -> WeStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let cfg = SamplerConfig {
            gamma,
            walk_length,
            num_shards: num_shards as usize,
            seed,
            ..SamplerConfig::default()
        };
        let m = sampler::run_sampling(&g.0, &cfg, &dir)?;
        if let Some(o) = out_records.as_mut() {
            *o = m.stats.records;
        }
        Ok(())
    })
}

/// Trains on the records in `records_dir`. `config_toml` holds a training
/// configuration in TOML; NULL selects the synchronous defaults.
///
/// # Safety
/// `records_dir` must be a valid NUL-terminated string, `config_toml` NULL or
/// one, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_train(
    records_dir: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut WeEmbedding,
) -> WeStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(records_dir, "records_dir")?);
        let out = out_arg(out, "out")?;
        let cfg: TrainConfig = if config_toml.is_null() {
            TrainConfig::synchronous_defaults()
        } else {
            let text = str_arg(config_toml, "config_toml")?;
            TrainConfig::from_toml(text)?
        };
        let manifest = RecordManifest::read(&dir)?;
        let table = cfg.initial_table(manifest.num_nodes);
        let outcome = trainer::train(&manifest.shard_paths(&dir), &cfg, table)?;
        *out = Box::into_raw(Box::new(WeEmbedding(outcome.table)));
        Ok(())
    })
}

/// Loads a checkpoint written by training.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_load(
    path: *const c_char,
    out: *mut *mut WeEmbedding,
) -> WeStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let (_, table) = trainer::read_checkpoint(path)?;
        *out = Box::into_raw(Box::new(WeEmbedding(table)));
        Ok(())
    })
}

/// Writes a checkpoint with step 0 and a zero config hash.
///
/// # Safety
/// `e` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_save(e: *const WeEmbedding, path: *const c_char) -> WeStatus {
    guard(|| {
        let e = ref_arg(e, "e")?;
        let path = str_arg(path, "path")?;
        trainer::write_checkpoint(&e.0, 0, 0, path)?;
        Ok(())
    })
}

/// Row count, or 0 for a NULL handle.
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_num_nodes(e: *const WeEmbedding) -> u64 {
    e.as_ref().map_or(0, |e| e.0.num_nodes() as u64)
}

/// Dimension, or 0 for a NULL handle.
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_dim(e: *const WeEmbedding) -> u64 {
    e.as_ref().map_or(0, |e| e.0.dim() as u64)
}

/// Copies row `node` into `buf`, which must hold at least `dim` floats.
///
/// # Safety
/// `e` must be a live handle and `buf` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_row(
    e: *const WeEmbedding,
    node: u32,
    buf: *mut f32,
    len: usize,
) -> WeStatus {
    guard(|| {
        let e = ref_arg(e, "e")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if node as usize >= e.0.num_nodes() {
            return Err(Error::NodeOutOfRange {
                id: u64::from(node),
                num_nodes: e.0.num_nodes(),
            }
            .into());
        }
        let row = e.0.row(node);
        if len < row.len() {
            return Err(Failure(
                WeStatus::WeErrBufferTooSmall,
                format!("buffer holds {len} floats, row has {}", row.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, row.len()).copy_from_slice(row);
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn we_embedding_free(e: *mut WeEmbedding) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Edge signal-to-noise ratio: mean non-edge distance over mean edge
/// distance after L2 normalization, with `non_edge_samples` sampled pairs.
///
/// # Safety
/// `g` and `e` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_edge_snr(
    g: *const WeGraph,
    e: *const WeEmbedding,
    non_edge_samples: u64,
    seed: u64,
    out: *mut f64,
) -> WeStatus {
    guard(|| {
        let g = ref_arg(g, "g")?;
        let e = ref_arg(e, "e")?;
        let out = out_arg(out, "out")?;
        let (norm, _) = eval::l2_normalize(&e.0);
        *out = eval::edge_snr(&g.0, &norm, non_edge_samples as usize, seed)?;
        Ok(())
    })
}

/// Runs or resumes the pipeline described by a TOML file.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn we_run_pipeline(config_path: *const c_char) -> WeStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(config_path, "config_path")?);
        let cfg = PipelineConfig::load(&path)?;
        pipeline::run_pipeline(&cfg)?;
        Ok(())
    })
}
