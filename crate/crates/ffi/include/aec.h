#ifndef AEC_H
#define AEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AecStatus {
  AEC_STATUS_OK = 0,
  // Null pointer, zero length or non-UTF-8 path.
  AEC_STATUS_INVALID_ARGUMENT = 1,
  AEC_STATUS_CONFIG = 2,
  AEC_STATUS_IO = 3,
  AEC_STATUS_MISSING_ARTIFACT = 4,
  AEC_STATUS_DIVERGED = 5,
  AEC_STATUS_SHAPE_MISMATCH = 6,
  AEC_STATUS_NO_SIGNAL = 7,
  AEC_STATUS_CORRUPT_CHECKPOINT = 8,
  // The output buffer is smaller than the result; the needed length has
  // been written to `out_len`.
  AEC_STATUS_BUFFER_TOO_SMALL = 9,
  AEC_STATUS_INTERNAL = 10,
} AecStatus;

// A loaded ratio-mask predictor.
typedef struct AecMaskPredictor AecMaskPredictor;

// A loaded neural echo canceller.
typedef struct AecNeural AecNeural;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *aec_version(void);

// Message describing the last failed call on this thread, or an empty
// string. Valid until the next call into the library on this thread.
const char *aec_last_error(void);

// Subband adaptive-filter echo removal with default settings. `out` must
// hold `probe_len` samples; the result has the probe's length.
//
// # Safety
// `probe`, `reference` and `out` must point to at least `probe_len`,
// `reference_len` and `probe_len` floats.
enum AecStatus aec_nlms_erase(const float *probe,
                              size_t probe_len,
                              const float *reference,
                              size_t reference_len,
                              uint32_t sample_rate,
                              float *out);

// Loads a neural checkpoint into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AecStatus aec_neural_load(const char *path, struct AecNeural **out);

// Runs the neural model. On success `*out_len` holds the number of samples
// written; when the buffer is too small it holds the needed length.
//
// # Safety
// `model` must come from [`aec_neural_load`]; buffers must hold the stated
// lengths; `out_len` must be valid.
enum AecStatus aec_neural_erase(const struct AecNeural *model,
                                const float *probe,
                                size_t probe_len,
                                const float *reference,
                                size_t reference_len,
                                uint32_t sample_rate,
                                float *out,
                                size_t out_capacity,
                                size_t *out_len);

// # Safety
// `model` must come from [`aec_neural_load`] and not be used afterwards.
void aec_neural_free(struct AecNeural *model);

// Loads a mask-predictor checkpoint into `*out`.
//
// # Safety
// As [`aec_neural_load`].
enum AecStatus aec_mask_load(const char *path, struct AecMaskPredictor **out);

// Applies the predicted mask. Output conventions as [`aec_neural_erase`].
//
// # Safety
// As [`aec_neural_erase`].
enum AecStatus aec_mask_erase(const struct AecMaskPredictor *model,
                              const float *probe,
                              size_t probe_len,
                              const float *reference,
                              size_t reference_len,
                              uint32_t sample_rate,
                              float *out,
                              size_t out_capacity,
                              size_t *out_len);

// # Safety
// `model` must come from [`aec_mask_load`] and not be used afterwards.
void aec_mask_free(struct AecMaskPredictor *model);

// Gain-fitted signal-to-distortion ratio of `estimate` against
// `reference`, in dB.
//
// # Safety
// Both buffers must hold `len` floats; `out_db` must be valid.
enum AecStatus aec_sdr(const float *estimate, const float *reference, size_t len, double *out_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AEC_H */
