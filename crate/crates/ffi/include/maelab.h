#ifndef MAELAB_H
#define MAELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MaelabStatus {
  MAELAB_STATUS_OK = 0,
  MAELAB_STATUS_NULL_POINTER = 1,
  MAELAB_STATUS_INVALID_ARGUMENT = 2,
  MAELAB_STATUS_SHAPE_MISMATCH = 3,
  MAELAB_STATUS_IO = 4,
  MAELAB_STATUS_CORRUPT = 5,
  MAELAB_STATUS_MALFORMED = 6,
  MAELAB_STATUS_UNSUPPORTED_VERSION = 7,
  MAELAB_STATUS_BUFFER_TOO_SMALL = 8,
  MAELAB_STATUS_RUNTIME = 9,
  MAELAB_STATUS_PANIC = 10,
} MaelabStatus;

typedef enum MaelabDistance {
  MAELAB_DISTANCE_L1 = 0,
  MAELAB_DISTANCE_L2 = 1,
} MaelabDistance;

/**
 * Frozen MAE loaded from a checkpoint.
 */
typedef struct MaelabMae MaelabMae;

/**
 * Fitted NIQE pristine model.
 */
typedef struct MaelabNiqe MaelabNiqe;

/**
 * Dimensions of an `N×C×H×W` buffer.
 */
typedef struct MaelabShape {
  size_t n;
  size_t c;
  size_t h;
  size_t w;
} MaelabShape;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *maelab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *maelab_version(void);

enum MaelabStatus maelab_mae_load(const char *path, struct MaelabMae **out);

void maelab_mae_free(struct MaelabMae *mae);

/**
 * Input channels the encoder expects.
 */
size_t maelab_mae_in_channels(const struct MaelabMae *mae);

/**
 * Spatial downsampling factor of the encoder; inputs must have H and W
 * divisible by it.
 */
size_t maelab_mae_stride(const struct MaelabMae *mae);

/**
 * Encoder features of `input`. `out_shape` always receives the feature
 * shape; the values are written only when `capacity` is large enough,
 * otherwise the call returns `BUFFER_TOO_SMALL`.
 */
enum MaelabStatus maelab_mae_encode(const struct MaelabMae *mae,
                                    const double *input,
                                    struct MaelabShape shape,
                                    double *out,
                                    size_t capacity,
                                    struct MaelabShape *out_shape);

/**
 * `base(pred, gt) + lambda · feature(E(pred), E(gt))`. `mae` may be null,
 * in which case the feature term is zero. With `crops > 0` the feature term
 * is averaged over that many aligned `crop_px` crops chosen by `seed`.
 * Any of the three outputs may be null.
 */
enum MaelabStatus maelab_total_loss(const struct MaelabMae *mae,
                                    const double *pred,
                                    const double *gt,
                                    struct MaelabShape shape,
                                    enum MaelabDistance base,
                                    enum MaelabDistance feature,
                                    double lambda,
                                    size_t crop_px,
                                    size_t crops,
                                    uint64_t seed,
                                    double *out_total,
                                    double *out_base,
                                    double *out_feature);

/**
 * PSNR in dB for signals with the given peak value, capped at 99 dB.
 */
enum MaelabStatus maelab_psnr(const double *pred,
                              const double *gt,
                              struct MaelabShape shape,
                              double peak,
                              double *out);

enum MaelabStatus maelab_ssim(const double *pred,
                              const double *gt,
                              struct MaelabShape shape,
                              double peak,
                              double *out);

/**
 * Mean spectral angle in radians; needs at least two channels.
 */
enum MaelabStatus maelab_sam(const double *pred,
                             const double *gt,
                             struct MaelabShape shape,
                             double *out);

enum MaelabStatus maelab_ergas(const double *pred,
                               const double *gt,
                               struct MaelabShape shape,
                               double scale_ratio,
                               double *out);

enum MaelabStatus maelab_niqe_load(const char *path, struct MaelabNiqe **out);

void maelab_niqe_free(struct MaelabNiqe *niqe);

/**
 * NIQE of one `C×H×W` image (`shape.n` must be 1); lower is more natural.
 */
enum MaelabStatus maelab_niqe_score(const struct MaelabNiqe *niqe,
                                    const double *image,
                                    struct MaelabShape shape,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAELAB_H */
