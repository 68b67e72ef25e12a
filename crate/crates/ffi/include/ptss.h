#ifndef PTSS_H
#define PTSS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum PtssStatus {
  PTSS_STATUS_OK = 0,
  PTSS_STATUS_NULL_POINTER = 1,
  PTSS_STATUS_INVALID_ARGUMENT = 2,
  PTSS_STATUS_IO = 3,
  PTSS_STATUS_PARSE = 4,
  PTSS_STATUS_DIMENSION_MISMATCH = 5,
  PTSS_STATUS_NUMERIC = 6,
  PTSS_STATUS_CONFIG = 7,
  PTSS_STATUS_STAGE = 8,
  PTSS_STATUS_PANIC = 99,
} PtssStatus;

// Scored triple pairs.
typedef struct PtssDataset PtssDataset;

// Entity and predicate seed embeddings aligned with a graph.
typedef struct PtssEmbeddings PtssEmbeddings;

// A loaded knowledge graph.
typedef struct PtssGraph PtssGraph;

// Dense row-major matrix of doubles.
typedef struct PtssMatrix PtssMatrix;

// Topology counts of a graph.
typedef struct PtssGraphStats {
  size_t num_entities;
  size_t num_predicates;
  size_t num_triples;
  size_t multi_edge_triples;
  size_t strongly_connected_components;
  size_t weakly_connected_components;
} PtssGraphStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *ptss_last_error(void);

// Library version as a static nul-terminated string.
const char *ptss_version(void);

// Loads the union of `n_paths` tab-separated triple files.
//
// # Safety
// `paths` must point to `n_paths` valid C strings; `out` must be writable.
enum PtssStatus ptss_graph_load(const char *const *paths,
                                size_t n_paths,
                                struct PtssGraph **out_graph);

// # Safety
// `g` must come from [`ptss_graph_load`] and not be used afterwards.
void ptss_graph_free(struct PtssGraph *g);

// # Safety
// `g` must be a live graph handle or null (returns 0).
size_t ptss_graph_num_triples(const struct PtssGraph *g);

// # Safety
// `g` must be a live graph handle; `out_stats` must be writable.
enum PtssStatus ptss_graph_stats(const struct PtssGraph *g, struct PtssGraphStats *out_stats);

// Reads `name<TAB>values…` embedding files for every entity and predicate
// of `g`. `model` is a tag such as `"transe"` or `"complex"`.
//
// # Safety
// Handles and strings must be valid; `out_emb` must be writable.
enum PtssStatus ptss_embeddings_import(const struct PtssGraph *g,
                                       const char *entity_path,
                                       const char *predicate_path,
                                       const char *model,
                                       struct PtssEmbeddings **out_emb);

// Trains seed embeddings with default settings apart from the arguments.
//
// # Safety
// Handles and strings must be valid; `out_emb` must be writable.
enum PtssStatus ptss_embeddings_train(const struct PtssGraph *g,
                                      const char *model,
                                      size_t dim,
                                      size_t epochs,
                                      uint64_t rng_seed,
                                      struct PtssEmbeddings **out_emb);

// # Safety
// `e` must come from this library and not be used afterwards.
void ptss_embeddings_free(struct PtssEmbeddings *e);

// PTSS of two triples of `g`, by index.
//
// # Safety
// Handles must be live and aligned; `out_score` must be writable.
enum PtssStatus ptss_score(const struct PtssGraph *g,
                           const struct PtssEmbeddings *e,
                           size_t triple_a,
                           size_t triple_b,
                           double *out_score);

// Samples up to `4n` candidates per triple and scores them.
//
// # Safety
// Handles must be live; `out_ds` must be writable.
enum PtssStatus ptss_dataset_build(const struct PtssGraph *g,
                                   const struct PtssEmbeddings *e,
                                   size_t n,
                                   uint64_t rng_seed,
                                   struct PtssDataset **out_ds);

// # Safety
// `d` must be a live dataset handle or null (returns 0).
size_t ptss_dataset_len(const struct PtssDataset *d);

// Pair `i` of the dataset.
//
// # Safety
// `d` must be live; the out pointers must be writable.
enum PtssStatus ptss_dataset_get(const struct PtssDataset *d,
                                 size_t i,
                                 size_t *out_a,
                                 size_t *out_b,
                                 double *out_score);

// Writes the dataset as TSV.
//
// # Safety
// `d` must be live; `path` a valid C string.
enum PtssStatus ptss_dataset_write(const struct PtssDataset *d, const char *path);

// Reads a dataset written by [`ptss_dataset_write`].
//
// # Safety
// `path` must be a valid C string; `out_ds` writable.
enum PtssStatus ptss_dataset_read(const char *path, struct PtssDataset **out_ds);

// # Safety
// `d` must come from this library and not be used afterwards.
void ptss_dataset_free(struct PtssDataset *d);

// Fine-tunes triple embeddings. `aggregation` is one of `avg`, `had`,
// `l1`, `l2`, `ht`. Zero `batch_size`, `epochs` or a non-positive
// `learning_rate` select the defaults.
//
// # Safety
// Handles must be live; `aggregation` a valid C string; `out_matrix`
// writable.
enum PtssStatus ptss_finetune(const struct PtssGraph *g,
                              const struct PtssEmbeddings *e,
                              const struct PtssDataset *d,
                              const char *aggregation,
                              size_t batch_size,
                              size_t epochs,
                              double learning_rate,
                              uint64_t rng_seed,
                              struct PtssMatrix **out_matrix);

// # Safety
// `m` must be a live matrix handle or null (returns 0).
size_t ptss_matrix_rows(const struct PtssMatrix *m);

// # Safety
// `m` must be a live matrix handle or null (returns 0).
size_t ptss_matrix_cols(const struct PtssMatrix *m);

// Row-major values, valid while `m` lives.
//
// # Safety
// `m` must be a live matrix handle or null (returns null).
const double *ptss_matrix_data(const struct PtssMatrix *m);

// # Safety
// `m` must come from this library and not be used afterwards.
void ptss_matrix_free(struct PtssMatrix *m);

// Runs the full pipeline described by a TOML config file.
//
// # Safety
// `config_path` must be a valid C string.
enum PtssStatus ptss_run_pipeline(const char *config_path, bool force);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTSS_H */
