#ifndef SWORDSMAN_H
#define SWORDSMAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SW_PARTITION_FIXED 0

#define SW_PARTITION_ADAPTIVE 1

#define SW_THRESHOLD_FIXED 0

#define SW_THRESHOLD_DYNAMIC 1

#define SW_CACHE_NONE 0

#define SW_CACHE_PREFIX 1

#define SW_CACHE_DUAL 2

#define SW_STYLE_PLANTED 0

#define SW_STYLE_STANDARD 1

typedef enum SwStatus {
  SW_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SW_STATUS_NULL = 1,
  SW_STATUS_CONFIG = 2,
  SW_STATUS_BACKEND = 3,
  SW_STATUS_IO = 4,
  /**
   * Contract violation or malformed input data.
   */
  SW_STATUS_INVALID = 5,
  SW_STATUS_PANIC = 6,
} SwStatus;

/**
 * Decode settings; starts from the engine defaults.
 */
typedef struct SwConfig SwConfig;

/**
 * A synthetic planted-corpus model.
 */
typedef struct SwModel SwModel;

/**
 * Output, metrics and trace of one decode.
 */
typedef struct SwResult SwResult;

typedef struct SwMetrics {
  uint64_t forward_passes;
  uint64_t token_compute;
  uint64_t steps;
  uint64_t blocks;
  double tokens_per_step;
} SwMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *sw_last_error(void);

/**
 * Library version as a static string.
 */
const char *sw_version(void);

/**
 * Loads a planted-corpus spec from a JSON file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SwStatus sw_model_load_synth(const char *path, struct SwModel **out);

/**
 * Generates a corpus with the default parameters of `style`
 * (`SW_STYLE_PLANTED` or `SW_STYLE_STANDARD`).
 *
 * # Safety
 * `out` must be writable.
 */
enum SwStatus sw_model_generate_synth(uint32_t style, uint64_t seed, struct SwModel **out);

/**
 * Writes the model's spec as JSON.
 *
 * # Safety
 * `model` must come from this library; `path` must be nul-terminated.
 */
enum SwStatus sw_model_save(const struct SwModel *model, const char *path);

/**
 * Generation length of the corpus, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t sw_model_gen_len(const struct SwModel *model);

/**
 * # Safety
 * `model` must be null or come from this library, and not be used again.
 */
void sw_model_free(struct SwModel *model);

/**
 * A configuration holding the engine defaults.
 */
struct SwConfig *sw_config_new(void);

/**
 * # Safety
 * `config` must be null or come from this library, and not be used again.
 */
void sw_config_free(struct SwConfig *config);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_gen_len(struct SwConfig *config, size_t gen_len);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_partition(struct SwConfig *config, uint32_t mode);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_block_size(struct SwConfig *config, size_t block_size);

/**
 * `tau_min` may be `INFINITY` to disable splitting.
 *
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_tau_min(struct SwConfig *config, double tau_min);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_threshold(struct SwConfig *config, uint32_t mode);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_tau_fixed(struct SwConfig *config, double tau);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_tau_init(struct SwConfig *config, double tau);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_cache(struct SwConfig *config, uint32_t mode);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_parallel(struct SwConfig *config, bool parallel);

/**
 * # Safety
 * `config` must come from [`sw_config_new`].
 */
enum SwStatus sw_config_set_seed(struct SwConfig *config, uint64_t seed);

/**
 * Decodes the model's corpus. A null `prompt` with `prompt_len` 0 uses the
 * corpus's own prompt. A `gen_len` of 0 in `config` means the corpus length.
 *
 * # Safety
 * `prompt` must point to `prompt_len` token ids (or be null with length 0);
 * handles must come from this library; `out` must be writable.
 */
enum SwStatus sw_decode(const struct SwModel *model,
                        const struct SwConfig *config,
                        const uint32_t *prompt,
                        size_t prompt_len,
                        struct SwResult **out);

/**
 * Borrows the full token sequence (prompt then generation). The pointer is
 * valid until the result is freed.
 *
 * # Safety
 * `result` must come from [`sw_decode`]; `tokens` and `len` must be writable.
 */
enum SwStatus sw_result_tokens(const struct SwResult *result, const uint32_t **tokens, size_t *len);

/**
 * Number of prompt tokens at the front of [`sw_result_tokens`].
 *
 * # Safety
 * `result` must be null or come from [`sw_decode`].
 */
size_t sw_result_prompt_len(const struct SwResult *result);

/**
 * # Safety
 * `result` must come from [`sw_decode`]; `out` must be writable.
 */
enum SwStatus sw_result_metrics(const struct SwResult *result, struct SwMetrics *out);

/**
 * Writes the decode trace as JSON lines.
 *
 * # Safety
 * `result` must come from [`sw_decode`]; `path` must be nul-terminated.
 */
enum SwStatus sw_result_write_trace(const struct SwResult *result, const char *path);

/**
 * # Safety
 * `result` must be null or come from [`sw_decode`], and not be used again.
 */
void sw_result_free(struct SwResult *result);

/**
 * Entropy in nats of `len` probabilities.
 *
 * # Safety
 * `probs` must point to `len` doubles; `out` must be writable.
 */
enum SwStatus sw_shannon_entropy(const double *probs, size_t len, double *out);

/**
 * In-block confidence threshold for difficulty `lambda` when the block's
 * mean entropy has fallen from `mean_start` to `mean_now`.
 */
double sw_dynamic_tau(double tau_init, double lambda, double mean_now, double mean_start);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWORDSMAN_H */
