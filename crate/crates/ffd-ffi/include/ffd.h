/* C interface for the ffd face-forgery-detection library. */

#pragma once

/* Generated with cbindgen:0.29.4 */

/* Generated from the ffd-ffi crate by cbindgen; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a fallible call.
 */
typedef enum FfdStatus {
  /**
   * The call succeeded and all outputs were written.
   */
  FFD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FFD_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of range, inconsistent, or otherwise unusable.
   */
  FFD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file or buffer did not hold what it was supposed to.
   */
  FFD_STATUS_DATA_ERROR = 3,
  /**
   * The operating system refused a file operation.
   */
  FFD_STATUS_IO_ERROR = 4,
  /**
   * A computation left the representable range.
   */
  FFD_STATUS_NUMERIC_ERROR = 5,
  /**
   * An unexpected internal failure; please report it.
   */
  FFD_STATUS_INTERNAL_ERROR = 6,
} FfdStatus;

/**
 * Evidence activation applied to raw head outputs.
 */
typedef enum FfdActivation {
  /**
   * `exp(x)` with the input clamped to a safe range.
   */
  FFD_ACTIVATION_CLAMPED_EXP = 0,
  /**
   * `max(0, x)`.
   */
  FFD_ACTIVATION_RELU = 1,
  /**
   * `ln(1 + exp(x))`, computed stably.
   */
  FFD_ACTIVATION_SOFTPLUS = 2,
} FfdActivation;

/**
 * How the decorrelation penalty treats the sign of the correlation.
 */
typedef enum FfdDecorrelationMode {
  /**
   * Penalize positive correlation only: `max(0, rho)`.
   */
  FFD_DECORRELATION_MODE_SIGNED = 0,
  /**
   * Penalize any correlation: `|rho|`.
   */
  FFD_DECORRELATION_MODE_ABSOLUTE = 1,
} FfdDecorrelationMode;

/**
 * A loaded scoring model plus the pixel normalization recorded in its
 * checkpoint; obtain with [`ffd_model_load`], release with
 * [`ffd_model_free`].
 */
typedef struct FfdModel FfdModel;

/**
 * Result of an exact accuracy-argmax threshold search; inspect it with
 * the `ffd_threshold_*` getters and release it with
 * [`ffd_threshold_free`].
 */
typedef struct FfdThresholdReport FfdThresholdReport;

/**
 * Dirichlet summary of one evidence vector.
 */
typedef struct FfdEvidenceSummary {
  /**
   * Total strength `S`, the sum of all concentrations `e_k + 1`.
   */
  double strength;
  /**
   * Uncertainty mass `K / S`, in `(0, 1]`.
   */
  double uncertainty;
  /**
   * Belief of the predicted class.
   */
  double max_belief;
  /**
   * Arg-max of belief; ties go to the lower class index.
   */
  size_t predicted_class;
} FfdEvidenceSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Never free it.
 */
const char *ffd_version(void);

/**
 * Number of classes every evidence vector and belief buffer uses
 * end-to-end in the pipeline (real and fake).
 */
size_t ffd_num_classes(void);

/**
 * Index of the fake class inside belief buffers.
 */
size_t ffd_fake_class(void);

/**
 * Copy the calling thread's most recent error message into `buf` as a
 * NUL-terminated string, truncating to `cap - 1` bytes if needed.
 * Returns the full message length in bytes, excluding the terminator.
 * The message describes the last call on this thread that failed.
 *
 * # Safety
 *
 * `buf` must point to `cap` writable bytes, or be null (then nothing is
 * copied and only the length is returned).
 */
size_t ffd_last_error_message(char *buf, size_t cap);

/**
 * Summarize a non-negative evidence vector: per-class belief
 * `(e_k + 1) / S`, total strength, uncertainty mass, and the predicted
 * class.
 *
 * # Safety
 *
 * `evidence` must point to `len` readable doubles, `belief_out` to `len`
 * writable doubles, and `out` to a writable summary struct.
 */
enum FfdStatus ffd_dirichlet_summary(const double *evidence,
                                     size_t len,
                                     double *belief_out,
                                     struct FfdEvidenceSummary *out);

/**
 * Apply `activation` to raw head outputs and summarize the resulting
 * evidence; see [`ffd_dirichlet_summary`].
 *
 * # Safety
 *
 * `logits` must point to `len` readable doubles, `belief_out` to `len`
 * writable doubles, and `out` to a writable summary struct.
 */
enum FfdStatus ffd_logits_summary(const double *logits,
                                  size_t len,
                                  enum FfdActivation activation,
                                  double *belief_out,
                                  struct FfdEvidenceSummary *out);

/**
 * Annealing factor `lambda0 ^ (1 - epoch / total_epochs)` for the
 * uncertainty-calibration loss. `lambda0` must lie in (0, 1], and
 * `epoch` must not exceed `total_epochs`.
 *
 * # Safety
 *
 * `out` must point to a writable double.
 */
enum FfdStatus ffd_anneal_factor(double lambda0,
                                 uint32_t total_epochs,
                                 uint32_t epoch,
                                 double *out);

/**
 * Decorrelation penalty between two feature vectors of equal length:
 * `max(0, rho)` or `|rho|` of their Pearson correlation, depending on
 * `mode`.
 *
 * # Safety
 *
 * `f_main` and `f_aux` must each point to `len` readable doubles and
 * `out` to a writable double.
 */
enum FfdStatus ffd_decorrelation_loss(const double *f_main,
                                      const double *f_aux,
                                      size_t len,
                                      enum FfdDecorrelationMode mode,
                                      double *out);

/**
 * Binary cross-entropy of predicting probability `p` for the fake class
 * when the true label is `is_fake`.
 *
 * # Safety
 *
 * `out` must point to a writable double.
 */
enum FfdStatus ffd_binary_cross_entropy(double p, bool is_fake, double *out);

/**
 * Evidential classification loss of one evidence vector against an
 * integer class label.
 *
 * # Safety
 *
 * `evidence` must point to `len` readable doubles and `out` to a
 * writable double.
 */
enum FfdStatus ffd_edl_loss(const double *evidence, size_t len, size_t label, double *out);

/**
 * Uncertainty-calibration loss summed over a batch given as parallel
 * arrays: per-sample predicted-class belief, uncertainty, predicted
 * class, and true label. Writes the summed loss and whether the batch
 * was empty (an empty batch yields 0).
 *
 * # Safety
 *
 * `max_belief`, `uncertainty`, `predicted`, and `labels` must each point
 * to `len` readable elements; `value_out` and `empty_out` must be
 * writable.
 */
enum FfdStatus ffd_euc_loss(const double *max_belief,
                            const double *uncertainty,
                            const size_t *predicted,
                            const size_t *labels,
                            size_t len,
                            double lambda,
                            double *value_out,
                            bool *empty_out);

/**
 * Branch-weighting rule `softmax(-u_main, -u_aux)`: the branch with
 * lower uncertainty earns the larger weight. Both uncertainties must lie
 * in [0, 1].
 *
 * # Safety
 *
 * `main_out` and `aux_out` must point to writable doubles.
 */
enum FfdStatus ffd_fusion_weights(double u_main, double u_aux, double *main_out, double *aux_out);

/**
 * Weighted sum of two feature vectors using the uncertainty-derived
 * weights of [`ffd_fusion_weights`].
 *
 * # Safety
 *
 * `f_main` and `f_aux` must each point to `len` readable doubles and
 * `fused_out` to `len` writable doubles.
 */
enum FfdStatus ffd_fuse(const double *f_main,
                        const double *f_aux,
                        size_t len,
                        double u_main,
                        double u_aux,
                        double *fused_out);

/**
 * Uncertainty-adjusted decision score `p / u`. `p` must lie in [0, 1]
 * and `u` in (0, 1].
 *
 * # Safety
 *
 * `out` must point to a writable double.
 */
enum FfdStatus ffd_adjust_probability(double p, double u, double *out);

/**
 * Area under the ROC curve of `scores` against binary `labels`
 * (1 = fake, scored higher). Ties receive the average rank. Needs at
 * least one sample of each class.
 *
 * # Safety
 *
 * `scores` must point to `len` readable doubles, `labels` to `len`
 * readable bytes, and `out` to a writable double.
 */
enum FfdStatus ffd_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

/**
 * Half-total error rate at threshold `tau`: the mean of the rate of
 * fakes scored below `tau` and the rate of reals scored at or above it.
 * Needs at least one sample of each class.
 *
 * # Safety
 *
 * `scores` must point to `len` readable doubles, `labels` to `len`
 * readable bytes, and `out` to a writable double.
 */
enum FfdStatus ffd_hter(const double *scores,
                        const uint8_t *labels,
                        size_t len,
                        double tau,
                        double *out);

/**
 * Search the accuracy-optimal decision threshold over `scores` against
 * binary `labels` (1 = fake; `score >= tau` classifies as fake). The
 * search is exact: it scans every distinct score plus one sentinel above
 * the maximum, and among ties picks the midpoint of the widest score
 * gap. On success the caller owns the returned report.
 *
 * # Safety
 *
 * `scores` must point to `len` readable doubles, `labels` to `len`
 * readable bytes, and `out` to a writable pointer slot.
 */
enum FfdStatus ffd_threshold_optimize(const double *scores,
                                      const uint8_t *labels,
                                      size_t len,
                                      struct FfdThresholdReport **out);

/**
 * Selected threshold: the midpoint of the widest accuracy-maximizing
 * score gap.
 *
 * # Safety
 *
 * `report` must be a live report from [`ffd_threshold_optimize`] and
 * `out` writable.
 */
enum FfdStatus ffd_threshold_tau(const struct FfdThresholdReport *report, double *out);

/**
 * Classification accuracy at the selected threshold.
 *
 * # Safety
 *
 * `report` must be a live report from [`ffd_threshold_optimize`] and
 * `out` writable.
 */
enum FfdStatus ffd_threshold_accuracy(const struct FfdThresholdReport *report, double *out);

/**
 * Whether only one label class was present; the search still ran but
 * the result is degenerate.
 *
 * # Safety
 *
 * `report` must be a live report from [`ffd_threshold_optimize`] and
 * `out` writable.
 */
enum FfdStatus ffd_threshold_single_class(const struct FfdThresholdReport *report, bool *out);

/**
 * Number of evaluated threshold candidates on the accuracy curve.
 *
 * # Safety
 *
 * `report` must be a live report from [`ffd_threshold_optimize`] and
 * `out` writable.
 */
enum FfdStatus ffd_threshold_curve_len(const struct FfdThresholdReport *report, size_t *out);

/**
 * Candidate threshold and its accuracy at position `index` of the
 * curve, in ascending threshold order.
 *
 * # Safety
 *
 * `report` must be a live report from [`ffd_threshold_optimize`];
 * `tau_out` and `acc_out` must be writable.
 */
enum FfdStatus ffd_threshold_curve_point(const struct FfdThresholdReport *report,
                                         size_t index,
                                         double *tau_out,
                                         double *acc_out);

/**
 * Release a threshold report. Null is a no-op.
 *
 * # Safety
 *
 * `report` must be null or a report from [`ffd_threshold_optimize`] that
 * has not been freed yet.
 */
void ffd_threshold_free(struct FfdThresholdReport *report);

/**
 * Load a trained checkpoint (full or scoring-branch-only) from `path`
 * for scoring. On success the caller owns the returned model.
 *
 * # Safety
 *
 * `path` must be a NUL-terminated string and `out` a writable pointer
 * slot.
 */
enum FfdStatus ffd_model_load(const char *path, struct FfdModel **out);

/**
 * Edge length in pixels of the square grayscale input the model scores.
 *
 * # Safety
 *
 * `model` must be a live model from [`ffd_model_load`] and `out`
 * writable.
 */
enum FfdStatus ffd_model_image_size(const struct FfdModel *model, size_t *out);

/**
 * Score one image. `pixels` holds row-major grayscale intensities in
 * [0, 1], exactly `image_size * image_size` of them; the model's stored
 * normalization is applied internally. Writes the fake probability to
 * `p_out` and the uncertainty mass to `u_out`.
 *
 * # Safety
 *
 * `model` must be a live model from [`ffd_model_load`]; `pixels` must
 * point to `len` readable doubles; `p_out` and `u_out` must be
 * writable.
 */
enum FfdStatus ffd_model_score(const struct FfdModel *model,
                               const double *pixels,
                               size_t len,
                               double *p_out,
                               double *u_out);

/**
 * Release a model. Null is a no-op.
 *
 * # Safety
 *
 * `model` must be null or a model from [`ffd_model_load`] that has not
 * been freed yet.
 */
void ffd_model_free(struct FfdModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
