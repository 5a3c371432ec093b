//! C ABI for the face-forgery-detection library.
//!
//! Thin `extern "C"` wrappers around [`ffd_core`]: the scalar evidential
//! math, loss terms, fusion rule, metrics, threshold search, and checkpoint
//! scoring. The generated header lives at `include/ffd.h`.
//!
//! Conventions shared by every function:
//!
//! * Fallible calls return [`FfdStatus`]; output pointers are written only
//!   when the call returns `FFD_STATUS_OK`.
//! * A failure stores a human-readable message for the calling thread,
//!   retrievable with [`ffd_last_error_message`].
//! * Array arguments are caller-owned; a null array pointer is accepted
//!   only when its length is 0.
//! * Objects returned through `*mut *mut` handles are owned by the caller
//!   and released with the matching `*_free` function (null is a no-op).
//! * Panics never unwind across the boundary; they surface as
//!   `FFD_STATUS_INTERNAL_ERROR`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use ffd_core::backbone::CheckpointMeta;
use ffd_core::evidential::{self, Activation};
use ffd_core::framework::DualBranchModel;
use ffd_core::losses::{self, AnnealSchedule, DecorrelationMode, EucSample};
use ffd_core::threshold::{self, ThresholdReport};
use ffd_core::{fusion, metrics, Error};

/// Result code of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfdStatus {
    /// The call succeeded and all outputs were written.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range, inconsistent, or otherwise unusable.
    InvalidArgument = 2,
    /// A file or buffer did not hold what it was supposed to.
    DataError = 3,
    /// The operating system refused a file operation.
    IoError = 4,
    /// A computation left the representable range.
    NumericError = 5,
    /// An unexpected internal failure; please report it.
    InternalError = 6,
}

/// Evidence activation applied to raw head outputs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfdActivation {
    /// `exp(x)` with the input clamped to a safe range.
    ClampedExp = 0,
    /// `max(0, x)`.
    Relu = 1,
    /// `ln(1 + exp(x))`, computed stably.
    Softplus = 2,
}

impl From<FfdActivation> for Activation {
    fn from(a: FfdActivation) -> Self {
        match a {
            FfdActivation::ClampedExp => Activation::ClampedExp,
            FfdActivation::Relu => Activation::Relu,
            FfdActivation::Softplus => Activation::Softplus,
        }
    }
}

/// How the decorrelation penalty treats the sign of the correlation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfdDecorrelationMode {
    /// Penalize positive correlation only: `max(0, rho)`.
    Signed = 0,
    /// Penalize any correlation: `|rho|`.
    Absolute = 1,
}

impl From<FfdDecorrelationMode> for DecorrelationMode {
    fn from(m: FfdDecorrelationMode) -> Self {
        match m {
            FfdDecorrelationMode::Signed => DecorrelationMode::Signed,
            FfdDecorrelationMode::Absolute => DecorrelationMode::Absolute,
        }
    }
}

/// Dirichlet summary of one evidence vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfdEvidenceSummary {
    /// Total strength `S`, the sum of all concentrations `e_k + 1`.
    pub strength: f64,
    /// Uncertainty mass `K / S`, in `(0, 1]`.
    pub uncertainty: f64,
    /// Belief of the predicted class.
    pub max_belief: f64,
    /// Arg-max of belief; ties go to the lower class index.
    pub predicted_class: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(e: Error) -> FfdStatus {
    let status = match e {
        Error::InvalidInput(_)
        | Error::Config(_)
        | Error::DegenerateInput(_)
        | Error::UndefinedMetric(_) => FfdStatus::InvalidArgument,
        Error::Data(_) | Error::Format(_) => FfdStatus::DataError,
        Error::Numeric(_) => FfdStatus::NumericError,
        Error::Io(_) => FfdStatus::IoError,
    };
    LAST_ERROR.with(|s| *s.borrow_mut() = e.to_string());
    status
}

fn fail_msg(status: FfdStatus, msg: &str) -> FfdStatus {
    LAST_ERROR.with(|s| *s.borrow_mut() = msg.to_string());
    status
}

/// Run `f`, turning any panic into `InternalError` instead of unwinding
/// into the caller.
fn guard(f: impl FnOnce() -> FfdStatus) -> FfdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail_msg(FfdStatus::InternalError, "unexpected internal panic"),
    }
}

macro_rules! check_ptr {
    ($($p:expr),+ $(,)?) => {
        $(if $p.is_null() {
            return fail_msg(
                FfdStatus::NullArgument,
                concat!(stringify!($p), " must not be null"),
            );
        })+
    };
}

/// View a C array. Null is tolerated only for empty arrays.
unsafe fn array<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(unsafe { slice::from_raw_parts(p, len) })
    }
}

macro_rules! check_array {
    ($slice:ident, $p:expr, $len:expr) => {
        let Some($slice) = (unsafe { array($p, $len) }) else {
            return fail_msg(
                FfdStatus::NullArgument,
                concat!(stringify!($p), " must not be null"),
            );
        };
    };
}

/// Library version as a static NUL-terminated string. Never free it.
#[no_mangle]
pub extern "C" fn ffd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of classes every evidence vector and belief buffer uses
/// end-to-end in the pipeline (real and fake).
#[no_mangle]
pub extern "C" fn ffd_num_classes() -> usize {
    ffd_core::framework::NUM_CLASSES
}

/// Index of the fake class inside belief buffers.
#[no_mangle]
pub extern "C" fn ffd_fake_class() -> usize {
    ffd_core::framework::FAKE_CLASS
}

/// Copy the calling thread's most recent error message into `buf` as a
/// NUL-terminated string, truncating to `cap - 1` bytes if needed.
/// Returns the full message length in bytes, excluding the terminator.
/// The message describes the last call on this thread that failed.
///
/// # Safety
///
/// `buf` must point to `cap` writable bytes, or be null (then nothing is
/// copied and only the length is returned).
#[no_mangle]
pub unsafe extern "C" fn ffd_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|s| {
        let msg = s.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n).cast::<u8>() = 0;
            }
        }
        msg.len()
    })
}

// ---------------------------------------------------------------------------
// Evidential math

fn write_summary(
    summary: &evidential::DirichletSummary,
    belief_out: *mut f64,
    out: *mut FfdEvidenceSummary,
) {
    unsafe {
        std::ptr::copy_nonoverlapping(summary.belief.as_ptr(), belief_out, summary.belief.len());
        *out = FfdEvidenceSummary {
            strength: summary.strength,
            uncertainty: summary.uncertainty,
            max_belief: summary.max_belief,
            predicted_class: summary.predicted_class,
        };
    }
}

/// Summarize a non-negative evidence vector: per-class belief
/// `(e_k + 1) / S`, total strength, uncertainty mass, and the predicted
/// class.
///
/// # Safety
///
/// `evidence` must point to `len` readable doubles, `belief_out` to `len`
/// writable doubles, and `out` to a writable summary struct.
#[no_mangle]
pub unsafe extern "C" fn ffd_dirichlet_summary(
    evidence: *const f64,
    len: usize,
    belief_out: *mut f64,
    out: *mut FfdEvidenceSummary,
) -> FfdStatus {
    guard(|| {
        check_ptr!(belief_out, out);
        check_array!(ev, evidence, len);
        match evidential::summarize(ev) {
            Ok(summary) => {
                write_summary(&summary, belief_out, out);
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Apply `activation` to raw head outputs and summarize the resulting
/// evidence; see [`ffd_dirichlet_summary`].
///
/// # Safety
///
/// `logits` must point to `len` readable doubles, `belief_out` to `len`
/// writable doubles, and `out` to a writable summary struct.
#[no_mangle]
pub unsafe extern "C" fn ffd_logits_summary(
    logits: *const f64,
    len: usize,
    activation: FfdActivation,
    belief_out: *mut f64,
    out: *mut FfdEvidenceSummary,
) -> FfdStatus {
    guard(|| {
        check_ptr!(belief_out, out);
        check_array!(raw, logits, len);
        let evidence = match evidential::evidence_from_logits(raw, activation.into()) {
            Ok(ev) => ev,
            Err(e) => return fail(e),
        };
        write_summary(
            &evidential::dirichlet_summary(&evidence),
            belief_out,
            out,
        );
        FfdStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Loss terms

/// Annealing factor `lambda0 ^ (1 - epoch / total_epochs)` for the
/// uncertainty-calibration loss. `lambda0` must lie in (0, 1], and
/// `epoch` must not exceed `total_epochs`.
///
/// # Safety
///
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_anneal_factor(
    lambda0: f64,
    total_epochs: u32,
    epoch: u32,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        let factor = AnnealSchedule::new(lambda0, total_epochs).and_then(|s| s.factor(epoch));
        match factor {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Decorrelation penalty between two feature vectors of equal length:
/// `max(0, rho)` or `|rho|` of their Pearson correlation, depending on
/// `mode`.
///
/// # Safety
///
/// `f_main` and `f_aux` must each point to `len` readable doubles and
/// `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_decorrelation_loss(
    f_main: *const f64,
    f_aux: *const f64,
    len: usize,
    mode: FfdDecorrelationMode,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        check_array!(a, f_main, len);
        check_array!(b, f_aux, len);
        match losses::decorrelation_loss(a, b, mode.into()) {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Binary cross-entropy of predicting probability `p` for the fake class
/// when the true label is `is_fake`.
///
/// # Safety
///
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_binary_cross_entropy(
    p: f64,
    is_fake: bool,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        match losses::binary_cross_entropy(p, is_fake) {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Evidential classification loss of one evidence vector against an
/// integer class label.
///
/// # Safety
///
/// `evidence` must point to `len` readable doubles and `out` to a
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_edl_loss(
    evidence: *const f64,
    len: usize,
    label: usize,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        check_array!(ev, evidence, len);
        let loss = evidential::EvidenceVector::new(ev.to_vec())
            .and_then(|vector| losses::edl_loss(&vector, label));
        match loss {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Uncertainty-calibration loss summed over a batch given as parallel
/// arrays: per-sample predicted-class belief, uncertainty, predicted
/// class, and true label. Writes the summed loss and whether the batch
/// was empty (an empty batch yields 0).
///
/// # Safety
///
/// `max_belief`, `uncertainty`, `predicted`, and `labels` must each point
/// to `len` readable elements; `value_out` and `empty_out` must be
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ffd_euc_loss(
    max_belief: *const f64,
    uncertainty: *const f64,
    predicted: *const usize,
    labels: *const usize,
    len: usize,
    lambda: f64,
    value_out: *mut f64,
    empty_out: *mut bool,
) -> FfdStatus {
    guard(|| {
        check_ptr!(value_out, empty_out);
        check_array!(p, max_belief, len);
        check_array!(u, uncertainty, len);
        check_array!(k, predicted, len);
        check_array!(y, labels, len);
        let batch: Vec<EucSample> = (0..len)
            .map(|i| EucSample {
                max_belief: p[i],
                uncertainty: u[i],
                predicted_class: k[i],
                label: y[i],
            })
            .collect();
        match losses::euc_loss(&batch, lambda) {
            Ok(loss) => {
                unsafe {
                    *value_out = loss.value;
                    *empty_out = loss.empty_batch;
                }
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Fusion

/// Branch-weighting rule `softmax(-u_main, -u_aux)`: the branch with
/// lower uncertainty earns the larger weight. Both uncertainties must lie
/// in [0, 1].
///
/// # Safety
///
/// `main_out` and `aux_out` must point to writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ffd_fusion_weights(
    u_main: f64,
    u_aux: f64,
    main_out: *mut f64,
    aux_out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(main_out, aux_out);
        match fusion::fusion_weights(u_main, u_aux) {
            Ok(w) => {
                unsafe {
                    *main_out = w.main;
                    *aux_out = w.aux;
                }
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Weighted sum of two feature vectors using the uncertainty-derived
/// weights of [`ffd_fusion_weights`].
///
/// # Safety
///
/// `f_main` and `f_aux` must each point to `len` readable doubles and
/// `fused_out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ffd_fuse(
    f_main: *const f64,
    f_aux: *const f64,
    len: usize,
    u_main: f64,
    u_aux: f64,
    fused_out: *mut f64,
) -> FfdStatus {
    guard(|| {
        if len > 0 {
            check_ptr!(fused_out);
        }
        check_array!(a, f_main, len);
        check_array!(b, f_aux, len);
        match fusion::fuse(a, b, u_main, u_aux) {
            Ok(fused) => {
                if len > 0 {
                    unsafe {
                        std::ptr::copy_nonoverlapping(fused.feature.as_ptr(), fused_out, len);
                    }
                }
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Scores and metrics

/// Uncertainty-adjusted decision score `p / u`. `p` must lie in [0, 1]
/// and `u` in (0, 1].
///
/// # Safety
///
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_adjust_probability(p: f64, u: f64, out: *mut f64) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        match threshold::adjust_probability(p, u) {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Area under the ROC curve of `scores` against binary `labels`
/// (1 = fake, scored higher). Ties receive the average rank. Needs at
/// least one sample of each class.
///
/// # Safety
///
/// `scores` must point to `len` readable doubles, `labels` to `len`
/// readable bytes, and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_auc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        check_array!(s, scores, len);
        check_array!(y, labels, len);
        match metrics::auc_from_scores(s, y) {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Half-total error rate at threshold `tau`: the mean of the rate of
/// fakes scored below `tau` and the rate of reals scored at or above it.
/// Needs at least one sample of each class.
///
/// # Safety
///
/// `scores` must point to `len` readable doubles, `labels` to `len`
/// readable bytes, and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ffd_hter(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    tau: f64,
    out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        check_array!(s, scores, len);
        check_array!(y, labels, len);
        match metrics::hter_from_scores(s, y, tau) {
            Ok(v) => {
                unsafe { *out = v };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Threshold search

/// Result of an exact accuracy-argmax threshold search; inspect it with
/// the `ffd_threshold_*` getters and release it with
/// [`ffd_threshold_free`].
pub struct FfdThresholdReport(ThresholdReport);

/// Search the accuracy-optimal decision threshold over `scores` against
/// binary `labels` (1 = fake; `score >= tau` classifies as fake). The
/// search is exact: it scans every distinct score plus one sentinel above
/// the maximum, and among ties picks the midpoint of the widest score
/// gap. On success the caller owns the returned report.
///
/// # Safety
///
/// `scores` must point to `len` readable doubles, `labels` to `len`
/// readable bytes, and `out` to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_optimize(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut *mut FfdThresholdReport,
) -> FfdStatus {
    guard(|| {
        check_ptr!(out);
        check_array!(s, scores, len);
        check_array!(y, labels, len);
        match threshold::optimal_threshold_from_scores(s, y) {
            Ok(report) => {
                let boxed = Box::new(FfdThresholdReport(report));
                unsafe { *out = Box::into_raw(boxed) };
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn report_get<T>(
    report: *const FfdThresholdReport,
    out: *mut T,
    get: impl Fn(&ThresholdReport) -> T,
) -> FfdStatus {
    guard(|| {
        check_ptr!(report, out);
        unsafe { *out = get(&(*report).0) };
        FfdStatus::Ok
    })
}

/// Selected threshold: the midpoint of the widest accuracy-maximizing
/// score gap.
///
/// # Safety
///
/// `report` must be a live report from [`ffd_threshold_optimize`] and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_tau(
    report: *const FfdThresholdReport,
    out: *mut f64,
) -> FfdStatus {
    unsafe { report_get(report, out, |r| r.tau_ot) }
}

/// Classification accuracy at the selected threshold.
///
/// # Safety
///
/// `report` must be a live report from [`ffd_threshold_optimize`] and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_accuracy(
    report: *const FfdThresholdReport,
    out: *mut f64,
) -> FfdStatus {
    unsafe { report_get(report, out, |r| r.acc_at_tau) }
}

/// Whether only one label class was present; the search still ran but
/// the result is degenerate.
///
/// # Safety
///
/// `report` must be a live report from [`ffd_threshold_optimize`] and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_single_class(
    report: *const FfdThresholdReport,
    out: *mut bool,
) -> FfdStatus {
    unsafe { report_get(report, out, |r| r.single_class) }
}

/// Number of evaluated threshold candidates on the accuracy curve.
///
/// # Safety
///
/// `report` must be a live report from [`ffd_threshold_optimize`] and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_curve_len(
    report: *const FfdThresholdReport,
    out: *mut usize,
) -> FfdStatus {
    unsafe { report_get(report, out, |r| r.curve.len()) }
}

/// Candidate threshold and its accuracy at position `index` of the
/// curve, in ascending threshold order.
///
/// # Safety
///
/// `report` must be a live report from [`ffd_threshold_optimize`];
/// `tau_out` and `acc_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_curve_point(
    report: *const FfdThresholdReport,
    index: usize,
    tau_out: *mut f64,
    acc_out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(report, tau_out, acc_out);
        let curve = unsafe { &(*report).0.curve };
        let Some(point) = curve.get(index) else {
            return fail_msg(
                FfdStatus::InvalidArgument,
                "curve index out of range",
            );
        };
        unsafe {
            *tau_out = point.tau;
            *acc_out = point.acc;
        }
        FfdStatus::Ok
    })
}

/// Release a threshold report. Null is a no-op.
///
/// # Safety
///
/// `report` must be null or a report from [`ffd_threshold_optimize`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ffd_threshold_free(report: *mut FfdThresholdReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

// ---------------------------------------------------------------------------
// Model scoring

/// A loaded scoring model plus the pixel normalization recorded in its
/// checkpoint; obtain with [`ffd_model_load`], release with
/// [`ffd_model_free`].
pub struct FfdModel {
    model: DualBranchModel,
    mean: f64,
    std: f64,
    image_size: usize,
}

/// Load a trained checkpoint (full or scoring-branch-only) from `path`
/// for scoring. On success the caller owns the returned model.
///
/// # Safety
///
/// `path` must be a NUL-terminated string and `out` a writable pointer
/// slot.
#[no_mangle]
pub unsafe extern "C" fn ffd_model_load(
    path: *const c_char,
    out: *mut *mut FfdModel,
) -> FfdStatus {
    guard(|| {
        check_ptr!(path, out);
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail_msg(FfdStatus::InvalidArgument, "path is not valid UTF-8");
        };
        let (model, meta) = match DualBranchModel::load_for_scoring(Path::new(path)) {
            Ok(loaded) => loaded,
            Err(e) => return fail(e),
        };
        let CheckpointMeta { normalization, .. } = meta;
        if normalization.mean.len() != 1 || normalization.std.len() != 1 {
            return fail(Error::Config(format!(
                "grayscale pipeline expects 1-channel normalization, got {}/{} entries",
                normalization.mean.len(),
                normalization.std.len()
            )));
        }
        let (mean, std) = (normalization.mean[0], normalization.std[0]);
        if !mean.is_finite() || !std.is_finite() || std == 0.0 {
            return fail(Error::Config(format!(
                "bad normalization: mean {mean}, std {std}"
            )));
        }
        let image_size = model.config().vit.image_size;
        let boxed = Box::new(FfdModel {
            model,
            mean,
            std,
            image_size,
        });
        unsafe { *out = Box::into_raw(boxed) };
        FfdStatus::Ok
    })
}

/// Edge length in pixels of the square grayscale input the model scores.
///
/// # Safety
///
/// `model` must be a live model from [`ffd_model_load`] and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_model_image_size(
    model: *const FfdModel,
    out: *mut usize,
) -> FfdStatus {
    guard(|| {
        check_ptr!(model, out);
        unsafe { *out = (*model).image_size };
        FfdStatus::Ok
    })
}

/// Score one image. `pixels` holds row-major grayscale intensities in
/// [0, 1], exactly `image_size * image_size` of them; the model's stored
/// normalization is applied internally. Writes the fake probability to
/// `p_out` and the uncertainty mass to `u_out`.
///
/// # Safety
///
/// `model` must be a live model from [`ffd_model_load`]; `pixels` must
/// point to `len` readable doubles; `p_out` and `u_out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ffd_model_score(
    model: *const FfdModel,
    pixels: *const f64,
    len: usize,
    p_out: *mut f64,
    u_out: *mut f64,
) -> FfdStatus {
    guard(|| {
        check_ptr!(model, p_out, u_out);
        check_array!(raw, pixels, len);
        let handle = unsafe { &*model };
        let size = handle.image_size;
        if len != size * size {
            return fail(Error::InvalidInput(format!(
                "expected {} pixels for a {size}x{size} frame, got {len}",
                size * size
            )));
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
            return fail(Error::InvalidInput(format!(
                "pixel intensity out of range: {bad}"
            )));
        }
        let mut images = ndarray::Array3::<f64>::zeros((1, size, size));
        for (slot, &v) in images.iter_mut().zip(raw) {
            *slot = (v - handle.mean) / handle.std;
        }
        match handle.model.forward_inference(images.view()) {
            Ok(scores) => {
                unsafe {
                    *p_out = scores[0].p;
                    *u_out = scores[0].u;
                }
                FfdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a model. Null is a no-op.
///
/// # Safety
///
/// `model` must be null or a model from [`ffd_model_load`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ffd_model_free(model: *mut FfdModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
