#ifndef OCTIC_H
#define OCTIC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Which suites [`octic_check`] runs.
typedef enum OcticScope {
  OCTIC_SCOPE_GROUP = 0,
  OCTIC_SCOPE_LAYERS = 1,
  OCTIC_SCOPE_MODEL = 2,
  OCTIC_SCOPE_INVARIANTS = 3,
  OCTIC_SCOPE_ALL = 4,
} OcticScope;

// Result of every fallible call; `OCTIC_STATUS_OK` is zero.
typedef enum OcticStatus {
  OCTIC_STATUS_OK = 0,
  OCTIC_STATUS_NULL_POINTER = 1,
  OCTIC_STATUS_INVALID_ARGUMENT = 2,
  OCTIC_STATUS_DIMENSION_MISMATCH = 3,
  OCTIC_STATUS_IO = 4,
  OCTIC_STATUS_FORMAT = 5,
  OCTIC_STATUS_CONSTRAINT = 6,
  OCTIC_STATUS_INTERNAL = 7,
} OcticStatus;

// An owned model. Opaque to C.
typedef struct OcticModel OcticModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *octic_last_error(void);

// Library version as a static NUL-terminated string.
const char *octic_version(void);

// Fourier transform of `count` contiguous 8-vectors from regular to
// isotypical coordinates. `input` and `output` hold `8·count` doubles and
// may alias.
//
// # Safety
// Both pointers must be valid for `8·count` doubles.
enum OcticStatus octic_fourier_forward(const double *input, double *output, size_t count);

// Inverse of [`octic_fourier_forward`].
//
// # Safety
// Both pointers must be valid for `8·count` doubles.
enum OcticStatus octic_fourier_inverse(const double *input, double *output, size_t count);

// Build a freshly initialised model from `key = value` config text (an
// empty string gives the defaults).
//
// # Safety
// `config` must be a NUL-terminated string and `out` a valid pointer.
enum OcticStatus octic_model_new(const char *config, struct OcticModel **out);

// Load a model checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OcticStatus octic_model_load(const char *path, struct OcticModel **out);

// Write a model checkpoint.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum OcticStatus octic_model_save(struct OcticModel *model, const char *path);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void octic_model_free(struct OcticModel *model);

// Image side length `M` and class count of a model.
//
// # Safety
// `model` must come from this library; outputs may be null.
enum OcticStatus octic_model_shape(const struct OcticModel *model,
                                   size_t *image_size,
                                   size_t *classes);

// Logits of one `3×M×M` image (channel-major, then row-major).
//
// # Safety
// `pixels` must hold `pixels_len` doubles and `logits` `logits_len`.
enum OcticStatus octic_model_forward(const struct OcticModel *model,
                                     const double *pixels,
                                     size_t pixels_len,
                                     double *logits,
                                     size_t logits_len);

// Whole-model matmul MAC ratio (standard over octic) of a named preset.
// `dense_fourier` charges the Fourier transforms as dense 8×8 products.
//
// # Safety
// `shape` must be NUL-terminated and `ratio` valid.
enum OcticStatus octic_flops_ratio(const char *shape, bool dense_fourier, double *ratio);

// Width above which the octic layer's arithmetic intensity exceeds the
// dense layer's, for `b` tokens, `p` bytes per element and output width
// `f_ratio·C`, searched in `[lo, hi]`.
//
// # Safety
// `crossover` must be valid.
enum OcticStatus octic_intensity_crossover(double b,
                                           double p,
                                           double f_ratio,
                                           double lo,
                                           double hi,
                                           double *crossover);

// Run the property suites; `failed` receives the number of failing rows.
//
// # Safety
// `failed` must be valid.
enum OcticStatus octic_check(enum OcticScope scope, size_t inputs, uint64_t seed, size_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCTIC_H */
