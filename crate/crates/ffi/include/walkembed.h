#ifndef WALKEMBED_H
#define WALKEMBED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `WE_OK` is zero; everything else is a failure.
 */
typedef enum WeStatus {
  WE_OK = 0,
  WE_ERR_NULL_POINTER = 1,
  WE_ERR_INVALID_UTF8 = 2,
  WE_ERR_CONFIG = 3,
  WE_ERR_PARSE = 4,
  WE_ERR_IO = 5,
  WE_ERR_FORMAT = 6,
  WE_ERR_OUT_OF_RANGE = 7,
  WE_ERR_EMPTY_GRAPH = 8,
  WE_ERR_CAPACITY = 9,
  WE_ERR_NUMERIC = 10,
  WE_ERR_UNDEFINED_METRIC = 11,
  WE_ERR_BUFFER_TOO_SMALL = 12,
  WE_ERR_PANIC = 13,
} WeStatus;

/**
 * Opaque embedding table handle.
 */
typedef struct WeEmbedding WeEmbedding;

/**
 * Opaque graph handle.
 */
typedef struct WeGraph WeGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *we_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *we_version(void);

/**
 * Loads an edge list (TSV/CSV) or binary CSR file, detected by content.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum WeStatus we_graph_load(const char *path, struct WeGraph **out);

/**
 * Builds a graph from `num_edges` endpoint pairs over dense ids
 * `0..num_nodes`. Duplicates and self-loops are dropped.
 *
 * # Safety
 * `src` and `dst` must point to `num_edges` readable values each (they may
 * be NULL when `num_edges` is zero); `out` must be a valid pointer.
 */
enum WeStatus we_graph_from_edges(uint64_t num_nodes,
                                  const uint32_t *src,
                                  const uint32_t *dst,
                                  size_t num_edges,
                                  struct WeGraph **out);

/**
 * Generates a stochastic block model graph with `classes` balanced
 * contiguous blocks.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum WeStatus we_graph_generate_sbm(uint64_t nodes,
                                    uint64_t classes,
                                    double p_in,
                                    double p_out,
                                    uint64_t seed,
                                    struct WeGraph **out);

/**
 * One-pass removal of nodes with degree below `min_degree`, as a new graph.
 *
 * # Safety
 * `g` must be a live handle and `out` a valid pointer.
 */
enum WeStatus we_graph_prune(const struct WeGraph *g, uint64_t min_degree, struct WeGraph **out);

/**
 * Node count, or 0 for a NULL handle.
 *
 * # Safety
 * `g` must be NULL or a live handle.
 */
uint64_t we_graph_num_nodes(const struct WeGraph *g);

/**
 * Undirected edge count, or 0 for a NULL handle.
 *
 * # Safety
 * `g` must be NULL or a live handle.
 */
uint64_t we_graph_num_edges(const struct WeGraph *g);

/**
 * # Safety
 * `g` must be a live handle and `out` a valid pointer.
 */
enum WeStatus we_graph_degree(const struct WeGraph *g, uint32_t node, uint64_t *out);

/**
 * Writes the graph as binary CSR.
 *
 * # Safety
 * `g` must be a live handle and `path` a valid NUL-terminated string.
 */
enum WeStatus we_graph_write_csr(const struct WeGraph *g, const char *path);

/**
 * # Safety
 * `g` must be NULL or a handle not yet freed.
 */
void we_graph_free(struct WeGraph *g);

/**
 * Samples co-occurrence records into shards under `out_dir` and reports
 * the record count.
 *
 * # Safety
 * `g` must be a live handle, `out_dir` a valid NUL-terminated string and
 * `out_records` NULL or a valid pointer.
 */
enum WeStatus we_sample(const struct WeGraph *g,
                        uint32_t gamma,
                        uint32_t walk_length,
                        uint64_t num_shards,
                        uint64_t seed,
                        const char *out_dir,
                        uint64_t *out_records);

/**
 * Trains on the records in `records_dir`. `config_toml` holds a training
 * configuration in TOML; NULL selects the synchronous defaults.
 *
 * # Safety
 * `records_dir` must be a valid NUL-terminated string, `config_toml` NULL or
 * one, and `out` a valid pointer.
 */
enum WeStatus we_train(const char *records_dir, const char *config_toml, struct WeEmbedding **out);

/**
 * Loads a checkpoint written by training.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum WeStatus we_embedding_load(const char *path, struct WeEmbedding **out);

/**
 * Writes a checkpoint with step 0 and a zero config hash.
 *
 * # Safety
 * `e` must be a live handle and `path` a valid NUL-terminated string.
 */
enum WeStatus we_embedding_save(const struct WeEmbedding *e, const char *path);

/**
 * Row count, or 0 for a NULL handle.
 *
 * # Safety
 * `e` must be NULL or a live handle.
 */
uint64_t we_embedding_num_nodes(const struct WeEmbedding *e);

/**
 * Dimension, or 0 for a NULL handle.
 *
 * # Safety
 * `e` must be NULL or a live handle.
 */
uint64_t we_embedding_dim(const struct WeEmbedding *e);

/**
 * Copies row `node` into `buf`, which must hold at least `dim` floats.
 *
 * # Safety
 * `e` must be a live handle and `buf` must point to `len` writable floats.
 */
enum WeStatus we_embedding_row(const struct WeEmbedding *e, uint32_t node, float *buf, size_t len);

/**
 * # Safety
 * `e` must be NULL or a handle not yet freed.
 */
void we_embedding_free(struct WeEmbedding *e);

/**
 * Edge signal-to-noise ratio: mean non-edge distance over mean edge
 * distance after L2 normalization, with `non_edge_samples` sampled pairs.
 *
 * # Safety
 * `g` and `e` must be live handles and `out` a valid pointer.
 */
enum WeStatus we_edge_snr(const struct WeGraph *g,
                          const struct WeEmbedding *e,
                          uint64_t non_edge_samples,
                          uint64_t seed,
                          double *out);

/**
 * Runs or resumes the pipeline described by a TOML file.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string.
 */
enum WeStatus we_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WALKEMBED_H */
