#ifndef MVR_H
#define MVR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum MvrStatus {
  MVR_STATUS_OK = 0,
  MVR_STATUS_NULL_POINTER = 1,
  MVR_STATUS_INVALID_ARGUMENT = 2,
  MVR_STATUS_IO = 3,
  MVR_STATUS_CORRUPT_INDEX = 4,
  MVR_STATUS_BUFFER_TOO_SMALL = 5,
  MVR_STATUS_INTERNAL = 6,
  MVR_STATUS_PANIC = 7,
} MvrStatus;

/**
 * Opaque index handle.
 */
typedef struct MvrIndex MvrIndex;

/**
 * Search knobs; start from `mvr_search_params_default`.
 */
typedef struct MvrSearchParams {
  size_t centroids_per_token;
  size_t max_candidates;
  float prune_ratio;
  size_t ef_search;
  size_t k;
} MvrSearchParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next mvr call on the same thread.
 */
const char *mvr_last_error(void);

struct MvrSearchParams mvr_search_params_default(void);

/**
 * Loads and verifies the index directory at `path` (UTF-8). On success
 * `*out` owns a handle to release with `mvr_index_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MvrStatus mvr_index_open(const char *path, struct MvrIndex **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `index` must come from `mvr_index_open` and not be used afterwards.
 */
void mvr_index_free(struct MvrIndex *index);

/**
 * Vector dimension, or 0 for NULL.
 *
 * # Safety
 * `index` must be NULL or a live handle.
 */
size_t mvr_index_dim(const struct MvrIndex *index);

/**
 * Number of documents, or 0 for NULL.
 *
 * # Safety
 * `index` must be NULL or a live handle.
 */
size_t mvr_index_num_docs(const struct MvrIndex *index);

/**
 * Copies the external id of document `doc` into `buf` with a trailing NUL.
 * `*len` receives the id length without the NUL, also when the buffer is
 * too small.
 *
 * # Safety
 * `buf` must hold `cap` bytes (it may be NULL when `cap` is 0) and `len`
 * must be writable.
 */
enum MvrStatus mvr_index_doc_id(const struct MvrIndex *index,
                                uint32_t doc,
                                char *buf,
                                size_t cap,
                                size_t *len);

/**
 * Searches with a query of `num_tokens` row-major vectors. Up to
 * `capacity` hits are written best first to `docs` and `scores`;
 * `*count` receives the number written.
 *
 * # Safety
 * `query` must hold `num_tokens * dim` floats, `docs` and `scores` must
 * hold `capacity` elements and `count` must be writable.
 */
enum MvrStatus mvr_index_search(const struct MvrIndex *index,
                                const float *query,
                                size_t num_tokens,
                                const struct MvrSearchParams *params,
                                uint32_t *docs,
                                float *scores,
                                size_t capacity,
                                size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVR_H */
