#ifndef SDDC_H
#define SDDC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum SddcStatus {
  SddcStatus_Ok = 0,
  SddcStatus_NullArgument = -1,
  SddcStatus_InvalidArgument = -2,
  SddcStatus_Io = -3,
  SddcStatus_CorruptData = -4,
  SddcStatus_Internal = -5,
} SddcStatus;

/**
 * Opaque handle to an encoder session accumulating frames.
 */
typedef struct SddcEncoder SddcEncoder;

/**
 * Opaque handle to a loaded model (checkpoint).
 */
typedef struct SddcModel SddcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message on this thread into `buf`; returns the
 * full message length (excluding the terminator).
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes, or be NULL (then only
 * the length is returned).
 */
size_t sddc_last_error(char *buf, size_t cap);

/**
 * Library version as a static string.
 */
const char *sddc_version(void);

/**
 * Load a model checkpoint; NULL on failure (see `sddc_last_error`).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct SddcModel *sddc_model_load(const char *path);

/**
 * # Safety
 * `model` must come from `sddc_model_load` and not be freed twice.
 */
void sddc_model_free(struct SddcModel *model);

/**
 * Create an encoder session. `flags` packs the ablation switches
 * (bit 0 = skip long-term fusion, bit 1 = zero the detail motion field).
 *
 * # Safety
 * `model` must be a live handle from `sddc_model_load` and must outlive the
 * encoder.
 */
struct SddcEncoder *sddc_encoder_new(const struct SddcModel *model,
                                     int width,
                                     int height,
                                     int lambda_index,
                                     int intra_period,
                                     int flags);

/**
 * Append one interleaved RGB frame (`width * height * 3` bytes).
 *
 * # Safety
 * `enc` must be live; `rgb` must point to `len` readable bytes.
 */
enum SddcStatus sddc_encoder_push_frame(struct SddcEncoder *enc, const uint8_t *rgb, size_t len);

/**
 * Encode all pushed frames to `out_path`; reports bits-per-pixel through
 * `bpp_out` when non-NULL. The session stays reusable (frames are kept).
 *
 * # Safety
 * `enc` must be live, its model handle must still be valid, and `out_path`
 * must be a valid NUL-terminated string.
 */
enum SddcStatus sddc_encoder_finish(const struct SddcEncoder *enc,
                                    const char *out_path,
                                    double *bpp_out);

/**
 * # Safety
 * `enc` must come from `sddc_encoder_new` and not be freed twice.
 */
void sddc_encoder_free(struct SddcEncoder *enc);

/**
 * Encode a stored sequence in one call.
 *
 * # Safety
 * `model` must be live; `input` and `out_path` must be valid NUL-terminated
 * strings.
 */
enum SddcStatus sddc_encode_file(const struct SddcModel *model,
                                 const char *input,
                                 int format,
                                 int width,
                                 int height,
                                 int frames,
                                 int lambda_index,
                                 int intra_period,
                                 int flags,
                                 const char *out_path,
                                 double *bpp_out);

/**
 * Decode a bitstream file to a frame directory (or raw YUV file).
 *
 * # Safety
 * `model` must be live; `stream_path` and `out_path` must be valid
 * NUL-terminated strings.
 */
enum SddcStatus sddc_decode_file(const struct SddcModel *model,
                                 const char *stream_path,
                                 const char *out_path,
                                 int format);

/**
 * Stride every coded frame is padded to; useful for callers allocating
 * aligned buffers.
 */
int sddc_codec_stride(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDDC_H */
