#ifndef GFT_H
#define GFT_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GftStatus {
  GFT_STATUS_OK = 0,
  GFT_STATUS_NULL_POINTER = 1,
  GFT_STATUS_INVALID_UTF8 = 2,
  GFT_STATUS_VALIDATION = 3,
  GFT_STATUS_CAPACITY = 4,
  GFT_STATUS_CONFIG = 5,
  GFT_STATUS_PARSE = 6,
  GFT_STATUS_CHECKPOINT = 7,
  GFT_STATUS_IO = 8,
  GFT_STATUS_TIMEOUT = 9,
  GFT_STATUS_BUFFER_TOO_SMALL = 10,
  GFT_STATUS_PANIC = 11,
} GftStatus;

/**
 * Opaque network handle.
 */
typedef struct GftNetwork GftNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *gft_last_error_message(void);

/**
 * Freshly initialised network for an architecture string such as
 * `784-256q2-10`.
 *
 * # Safety
 * `arch` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GftStatus gft_network_new(const char *arch, uint64_t seed, struct GftNetwork **out);

/**
 * Network stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GftStatus gft_network_load(const char *path, struct GftNetwork **out);

/**
 * Writes the network as a checkpoint without optimizer state.
 *
 * # Safety
 * `net` must be a live handle and `path` a NUL-terminated string.
 */
enum GftStatus gft_network_save(const struct GftNetwork *net, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void gft_network_free(struct GftNetwork *net);

/**
 * # Safety
 * `net` must be a live handle; `d_in` and `d_out` writable.
 */
enum GftStatus gft_network_dims(const struct GftNetwork *net, size_t *d_in, size_t *d_out);

/**
 * Logits for `rows` row-major samples of the network's input width.
 * `out` must hold `rows * d_out` values.
 *
 * # Safety
 * `x` must point to `rows * d_in` readable doubles and `out` to `out_len`
 * writable doubles.
 */
enum GftStatus gft_network_predict(const struct GftNetwork *net,
                                   const double *x,
                                   size_t rows,
                                   double *out,
                                   size_t out_len);

/**
 * Accuracy and mean softmax cross-entropy on a dataset descriptor
 * (`mnist:<dir>`, `mnist-test:<dir>`, `synthetic:<d>,<n>,<margin>,<seed>`).
 *
 * # Safety
 * `net` must be a live handle, `dataset` a NUL-terminated string,
 * `accuracy` and `mean_loss` writable.
 */
enum GftStatus gft_network_evaluate(const struct GftNetwork *net,
                                    const char *dataset,
                                    double *accuracy,
                                    double *mean_loss);

/**
 * Trains from config text (the same format as the CLI) and returns the
 * trained network. `final_accuracy` receives the last evaluation, or NaN
 * when no step ran.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` and `final_accuracy`
 * writable.
 */
enum GftStatus gft_train(const char *config, struct GftNetwork **out, double *final_accuracy);

/**
 * Storage bits of an architecture: 32 per full-precision parameter and
 * `b` per quantized one.
 *
 * # Safety
 * `arch` must be a NUL-terminated string and `bits` writable.
 */
enum GftStatus gft_model_bits(const char *arch, uint64_t *bits);

/**
 * Optimizer-step energy in pJ under the default constants for `steps`
 * steps over `fp_params` AdamW parameters and `q_params` GFT parameters
 * of width `bits` (2, 3 or 4).
 *
 * # Safety
 * `energy_pj` must be writable.
 */
enum GftStatus gft_energy_pj(uint64_t fp_params,
                             uint64_t q_params,
                             uint8_t bits,
                             uint64_t steps,
                             double *energy_pj);

/**
 * Brute-forces a DIMACS 3-CNF and its separability reduction.
 * `agree` is false only if the two deciders or witness checks disagree.
 *
 * # Safety
 * `dimacs` must be a NUL-terminated string; the three outputs writable.
 */
enum GftStatus gft_hardness_verify(const char *dimacs,
                                   bool *satisfiable,
                                   bool *separable,
                                   bool *agree);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFT_H */
