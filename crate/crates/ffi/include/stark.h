#ifndef STARK_H
#define STARK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum StarkAlgorithm {
  STARK_ALGORITHM_STARK = 0,
  STARK_ALGORITHM_NAIVE_BLOCK_JOIN = 1,
  STARK_ALGORITHM_NAIVE_BLOCK_COGROUP = 2,
  STARK_ALGORITHM_SERIAL_STRASSEN = 3,
  STARK_ALGORITHM_SERIAL_NAIVE = 4,
} StarkAlgorithm;

typedef enum StarkCostModel {
  STARK_COST_MODEL_MLLIB = 0,
  STARK_COST_MODEL_MARLIN = 1,
  STARK_COST_MODEL_STARK = 2,
} StarkCostModel;

typedef enum StarkStatus {
  STARK_STATUS_OK = 0,
  STARK_STATUS_NULL_POINTER = 1,
  STARK_STATUS_INVALID_ARGUMENT = 2,
  STARK_STATUS_DIMENSION_MISMATCH = 3,
  STARK_STATUS_RESOURCE_LIMIT = 4,
  STARK_STATUS_BUFFER_TOO_SMALL = 5,
  STARK_STATUS_INTERNAL = 6,
} StarkStatus;

/**
 * Opaque engine handle.
 */
typedef struct StarkEngine StarkEngine;

/**
 * Counters of one executed stage.
 */
typedef struct StarkStageMetrics {
  uint64_t stage_id;
  uint64_t tasks;
  uint64_t records_in;
  uint64_t records_out;
  uint64_t shuffled_elements;
  uint64_t flops;
  double wall_ms;
} StarkStageMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an engine with `workers` threads (0 selects the machine's
 * parallelism).
 */
struct StarkEngine *stark_engine_new(size_t workers, uint64_t seed);

/**
 * Releases an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must come from [`stark_engine_new`] and not be used afterwards.
 */
void stark_engine_free(struct StarkEngine *engine);

/**
 * Worker threads used by `engine`, or 0 for NULL.
 *
 * # Safety
 * `engine` must be NULL or a live handle.
 */
size_t stark_engine_workers(const struct StarkEngine *engine);

/**
 * Computes `out = a * b` for `n x n` row-major matrices. `block_size` is
 * the block side of the distributed algorithms and the recursion cutoff of
 * serial Strassen. `leaf_multiplies` may be NULL.
 *
 * # Safety
 * `a`, `b` and `out` must each point to `n * n` doubles; `out` must not
 * alias the inputs. `engine` must be a live handle.
 */
enum StarkStatus stark_multiply(struct StarkEngine *engine,
                                enum StarkAlgorithm algorithm,
                                const double *a,
                                const double *b,
                                size_t n,
                                size_t block_size,
                                double *out,
                                uint64_t *leaf_multiplies);

/**
 * Stages executed by the engine's most recent run (0 for serial runs or
 * a NULL handle).
 *
 * # Safety
 * `engine` must be NULL or a live handle.
 */
size_t stark_stage_count(const struct StarkEngine *engine);

/**
 * Copies the counters of stage `index` (0-based) of the most recent run.
 *
 * # Safety
 * `engine` must be a live handle and `out` writable.
 */
enum StarkStatus stark_stage_metrics(const struct StarkEngine *engine,
                                     size_t index,
                                     struct StarkStageMetrics *out);

/**
 * Writes the NUL-terminated label of stage `index` into `buf`. Fails with
 * `BufferTooSmall` when `capacity` cannot hold it.
 *
 * # Safety
 * `engine` must be a live handle and `buf` writable for `capacity` bytes.
 */
enum StarkStatus stark_stage_label(const struct StarkEngine *engine,
                                   size_t index,
                                   char *buf,
                                   size_t capacity);

/**
 * Total modelled cost in abstract units for an `n x n` product split
 * `splits` ways per side on `cores` cores.
 *
 * # Safety
 * `total` must be writable.
 */
enum StarkStatus stark_cost_total(enum StarkCostModel model,
                                  uint64_t n,
                                  uint64_t splits,
                                  uint64_t cores,
                                  double *total);

/**
 * Stage count of a distributed Strassen run with `splits` blocks per side.
 *
 * # Safety
 * `stages` must be writable.
 */
enum StarkStatus stark_model_stage_count(uint64_t n, uint64_t splits, uint32_t *stages);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *stark_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STARK_H */
