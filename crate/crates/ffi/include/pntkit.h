#ifndef PNTKIT_H
#define PNTKIT_H

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum PntStatus {
  PNT_STATUS_OK = 0,
  PNT_STATUS_NULL_POINTER = 1,
  PNT_STATUS_INVALID_UTF8 = 2,
  PNT_STATUS_CONFIG = 3,
  PNT_STATUS_PARSE = 4,
  PNT_STATUS_MODEL = 5,
  PNT_STATUS_UNBOUND_PARAMETER = 6,
  PNT_STATUS_MODE_INDEX = 7,
  PNT_STATUS_NOT_HERMITIAN = 8,
  PNT_STATUS_FRAME_DEGENERACY = 9,
  PNT_STATUS_STEP_SIZE = 10,
  PNT_STATUS_TRUNCATION = 11,
  PNT_STATUS_NUMERICAL = 12,
  PNT_STATUS_BUFFER_TOO_SMALL = 13,
  PNT_STATUS_PANIC = 14,
} PntStatus;

/**
 * Holonomy integration method.
 */
typedef enum PntMethod {
  PNT_METHOD_ORDERED_EXPONENTIAL = 0,
  PNT_METHOD_PROJECTOR_TRANSPORT = 1,
} PntMethod;

/**
 * Opaque model handle.
 */
typedef struct PntModel PntModel;

/**
 * Message of the last failed call on this thread, or null.
 * The pointer stays valid until the next call.
 */
const char *pntkit_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pntkit_string_free(char *s);

/**
 * Load a builtin model by name.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum PntStatus pntkit_model_builtin(const char *name, struct PntModel **out);

/**
 * Parse a model document.
 *
 * # Safety
 * `doc` must be a nul-terminated string and `out` a valid pointer.
 */
enum PntStatus pntkit_model_parse(const char *doc, struct PntModel **out);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void pntkit_model_free(struct PntModel *m);

/**
 * Number of model parameters.
 *
 * # Safety
 * `m` must be a live model handle and `out` a valid pointer.
 */
enum PntStatus pntkit_model_param_count(const struct PntModel *m, uintptr_t *out);

/**
 * Particle-number threshold scan up to `n_max` particles with covariant
 * derivatives to order `k_max`. When `report_json` is non-null it receives
 * the full report, to be released with [`pntkit_string_free`].
 *
 * # Safety
 * Pointers must be valid; `report_json` may be null.
 */
enum PntStatus pntkit_pnt_scan(const struct PntModel *m,
                               uint32_t n_max,
                               uint32_t k_max,
                               uint64_t seed,
                               uint32_t *n_t,
                               char **report_json);

/**
 * Rank of the curvature tower of one eigenspace, maximized over the base
 * point and `samples` random points. `layer < 0` selects the truncated
 * basis.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PntStatus pntkit_holonomy_dimension(const struct PntModel *m,
                                         int32_t layer,
                                         double eigenvalue,
                                         uint32_t k_max,
                                         uint32_t samples,
                                         uint64_t seed,
                                         double rank_tol,
                                         uintptr_t *rank,
                                         uintptr_t *dim_f);

/**
 * Holonomy of the eigenspace with `eigenvalue` around the loop document
 * `loop_doc`. The `d × d` unitary is written row-major into `re`/`im`
 * (capacity `cap` entries each) and `d` into `dim`.
 *
 * # Safety
 * Pointers must be valid and the buffers hold `cap` doubles.
 */
enum PntStatus pntkit_holonomy_loop(const struct PntModel *m,
                                    int32_t layer,
                                    double eigenvalue,
                                    const char *loop_doc,
                                    enum PntMethod method,
                                    double *re,
                                    double *im,
                                    uintptr_t cap,
                                    uintptr_t *dim);

#endif  /* PNTKIT_H */
