#ifndef EMBEDTUBE_H
#define EMBEDTUBE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum EtStatus {
  ET_STATUS_OK = 0,
  ET_STATUS_NULL_POINTER = 1,
  ET_STATUS_INVALID_ARGUMENT = 2,
  ET_STATUS_DIMENSION_MISMATCH = 3,
  ET_STATUS_NUMERICAL = 4,
  ET_STATUS_IO = 5,
  ET_STATUS_PANIC = 6,
} EtStatus;

// Weighted kernel mean embedding.
typedef struct EtEmbedding EtEmbedding;

// Fitted embedded transfer operator.
typedef struct EtOperator EtOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `capacity` bytes. Returns the full message length.
//
// # Safety
// `buffer` must be null or point to `capacity` writable bytes.
size_t et_last_error_message(char *buffer, size_t capacity);

// Fits an operator on `m` pairs. A `bandwidth <= 0` selects the median
// heuristic on `x`.
//
// # Safety
// `x` and `y` must each hold `m * dim` doubles; `out` must be writable.
enum EtStatus et_operator_fit(const double *x,
                              const double *y,
                              size_t m,
                              size_t dim,
                              double lambda,
                              double bandwidth,
                              struct EtOperator **out);

// # Safety
// `op` must be null or a handle from [`et_operator_fit`] not yet freed.
void et_operator_free(struct EtOperator *op);

// Kernel length-scale used by the operator.
//
// # Safety
// `op` must be a live handle and `out` writable.
enum EtStatus et_operator_bandwidth(const struct EtOperator *op, double *out);

// `|P|` over the embedding space.
//
// # Safety
// `op` must be a live handle and `out` writable.
enum EtStatus et_operator_norm(const struct EtOperator *op, double *out);

// `|P_a - P_b|`; both operators must share kernel and dimension.
//
// # Safety
// `a`, `b` must be live handles and `out` writable.
enum EtStatus et_operator_diff_norm(const struct EtOperator *a,
                                    const struct EtOperator *b,
                                    double *out);

// Bootstrap quantile of the operator deviation. `deviations`, if not null,
// receives the `m_b` sorted deviations.
//
// # Safety
// `op` must be a live handle, `delta` writable and `deviations` null or
// writable for `m_b` doubles.
enum EtStatus et_bootstrap_delta(const struct EtOperator *op,
                                 size_t m_b,
                                 double alpha,
                                 uint64_t seed,
                                 double *delta,
                                 double *deviations);

// Uniform-weight embedding of `n` sample points.
//
// # Safety
// `data` must hold `n * dim` doubles; `out` must be writable.
enum EtStatus et_embedding_from_sample(const double *data,
                                       size_t n,
                                       size_t dim,
                                       struct EtEmbedding **out);

// Embedding with explicit weights.
//
// # Safety
// `data` must hold `n * dim` doubles and `weights` `n` doubles; `out` must
// be writable.
enum EtStatus et_embedding_new(const double *data,
                               const double *weights,
                               size_t n,
                               size_t dim,
                               struct EtEmbedding **out);

// # Safety
// `mu` must be null or a live embedding handle.
void et_embedding_free(struct EtEmbedding *mu);

// Number of anchors, 0 for a null handle.
//
// # Safety
// `mu` must be null or a live embedding handle.
size_t et_embedding_len(const struct EtEmbedding *mu);

// Copies the weights into `buffer`, which must have room for
// [`et_embedding_len`] doubles.
//
// # Safety
// `mu` must be a live handle and `buffer` writable for `capacity` doubles.
enum EtStatus et_embedding_weights(const struct EtEmbedding *mu, double *buffer, size_t capacity);

// `P mu`, anchored at the operator's training outputs.
//
// # Safety
// `op`, `mu` must be live handles; `out` must be writable.
enum EtStatus et_pushforward(const struct EtOperator *op,
                             const struct EtEmbedding *mu,
                             struct EtEmbedding **out);

// MMD between two embeddings under a Gaussian RBF kernel of the given
// length-scale.
//
// # Safety
// `a`, `b` must be live handles and `out` writable.
enum EtStatus et_mmd(const struct EtEmbedding *a,
                     const struct EtEmbedding *b,
                     double bandwidth,
                     double *out);

// Radius recursion on given center norms: fills `radii[0..=n]`.
//
// # Safety
// `center_norms` must hold `n` doubles and `radii` have room for `n + 1`.
enum EtStatus et_tube_radii(double e_norm,
                            double f_norm,
                            double rho0,
                            const double *center_norms,
                            size_t n,
                            double *radii);

// Propagates `initial` for `horizon` steps with `E = |P|` and the given
// `F`, filling `radii` and `embedding_norms` (each `horizon + 1` long).
// `embedding_norms` may be null.
//
// # Safety
// `op`, `initial` must be live handles; output buffers as described.
enum EtStatus et_propagate_tube(const struct EtOperator *op,
                                const struct EtEmbedding *initial,
                                double rho0,
                                size_t horizon,
                                double f_norm,
                                double *radii,
                                double *embedding_norms);

// Bernstein-type high-probability bound on the operator estimation error.
//
// # Safety
// `out` must be writable.
enum EtStatus et_bernstein_bound(double lambda,
                                 size_t m,
                                 double delta_conf,
                                 double sigma_t,
                                 double sigma_0,
                                 double hs_norm_cyx,
                                 double l,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBEDTUBE_H */
