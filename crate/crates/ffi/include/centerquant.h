#ifndef CENTERQUANT_H
#define CENTERQUANT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CqPreset {
  CQ_PRESET_NONE = 0,
  CQ_PRESET_SMOOTH_QUANT = 1,
  CQ_PRESET_QUA_ROT = 2,
  CQ_PRESET_SDCB = 3,
  CQ_PRESET_DYN_CENTER = 4,
  CQ_PRESET_HADA_NORM = 5,
} CqPreset;

typedef enum CqStatus {
  CQ_STATUS_OK = 0,
  CQ_STATUS_NULL_POINTER = 1,
  CQ_STATUS_DIMENSION = 2,
  CQ_STATUS_SIZE = 3,
  CQ_STATUS_PARAMETER = 4,
  CQ_STATUS_NON_FINITE = 5,
  CQ_STATUS_UNDEFINED_SIGNAL = 6,
  CQ_STATUS_CONFIG = 7,
  CQ_STATUS_IO = 8,
  CQ_STATUS_FORMAT = 9,
  CQ_STATUS_CONTRACT = 10,
  CQ_STATUS_INVALID_STRING = 11,
  CQ_STATUS_PANIC = 12,
} CqStatus;

/**
 * Opaque transform plan: centering, scaling and rotation flags plus sigma.
 */
typedef struct CqPlan CqPlan;

/**
 * Opaque row-major matrix of doubles.
 */
typedef struct CqTensor CqTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failure on this thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length in
 * bytes excluding the terminator, or 0 when there is no error.
 */
size_t cq_last_error_message(char *buf, size_t len);

/**
 * Static NUL-terminated version string.
 */
const char *cq_version(void);

/**
 * Copies `rows * cols` doubles from `data` into a new tensor.
 */
enum CqStatus cq_tensor_new(size_t rows, size_t cols, const double *data, struct CqTensor **out);

void cq_tensor_free(struct CqTensor *t);

/**
 * Row count, or 0 for a null handle.
 */
size_t cq_tensor_rows(const struct CqTensor *t);

/**
 * Column count, or 0 for a null handle.
 */
size_t cq_tensor_cols(const struct CqTensor *t);

/**
 * Copies the tensor into `buf`, which must hold exactly `rows * cols` doubles.
 */
enum CqStatus cq_tensor_read(const struct CqTensor *t, double *buf, size_t len);

/**
 * Loads a `.npy` or `.csv` file.
 */
enum CqStatus cq_tensor_load(const char *p, struct CqTensor **out);

/**
 * Saves as `.npy` (float64) or `.csv` depending on the extension.
 */
enum CqStatus cq_tensor_save(const struct CqTensor *t, const char *p);

/**
 * Orthonormal Walsh-Hadamard transform of every row; `cols` must be a power of two.
 */
enum CqStatus cq_fwht_rows(const struct CqTensor *x, struct CqTensor **out);

/**
 * Builds the plan for `preset` from per-channel activation and weight
 * absmax vectors of length `d`; sigma is computed only for scaling presets.
 */
enum CqStatus cq_plan_from_preset(enum CqPreset preset,
                                  const double *act_absmax,
                                  const double *weight_absmax,
                                  size_t d,
                                  double alpha,
                                  double epsilon,
                                  struct CqPlan **out);

void cq_plan_free(struct CqPlan *p);

/**
 * Channel count of the plan, or 0 for a null handle.
 */
size_t cq_plan_dim(const struct CqPlan *p);

/**
 * Copies the plan's sigma (length `cq_plan_dim`) into `buf`.
 */
enum CqStatus cq_plan_sigma(const struct CqPlan *p, double *buf, size_t len);

/**
 * Transforms activations. The channel means used for centering are written
 * to `mu_out` (length `cols`, zeros when the plan does not center).
 */
enum CqStatus cq_forward_transform(const struct CqTensor *x,
                                   const struct CqPlan *p,
                                   struct CqTensor **out,
                                   double *mu_out,
                                   size_t mu_len);

/**
 * Folds the inverse transform into `d × n` weights.
 */
enum CqStatus cq_fuse_weights(const struct CqTensor *w,
                              const struct CqPlan *p,
                              struct CqTensor **out);

/**
 * Bias after folding the centering term through the weights actually used
 * (`w_tilde`, `d × n`). `b` and `b_out` have length `n`, `mu` length `d`.
 */
enum CqStatus cq_effective_bias(const double *b,
                                size_t n,
                                const double *mu,
                                size_t d,
                                const struct CqPlan *p,
                                const struct CqTensor *w_tilde,
                                double *b_out);

/**
 * Per-token asymmetric min-max fake quantization at `bits` (2..=8).
 */
enum CqStatus cq_fake_quant_activations(const struct CqTensor *x,
                                        uint8_t bits,
                                        struct CqTensor **out);

/**
 * Symmetric absmax fake quantization of `d × n` weights with one scale per
 * `block` input rows of each output column.
 */
enum CqStatus cq_fake_quant_weights(const struct CqTensor *w,
                                    uint8_t bits,
                                    size_t block,
                                    struct CqTensor **out);

/**
 * `10 log10(||ref||² / ||ref - test||²)` in dB, capped at 300.
 */
enum CqStatus cq_sqnr(const struct CqTensor *reference,
                      const struct CqTensor *test,
                      double *out_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CENTERQUANT_H */
