//! The training loop: deterministic epoch shuffling, per-step updates with
//! a numeric-failure guard, per-epoch metrics logging, checkpointing with
//! optimizer state, and bit-exact resume.

use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array3, ArrayD, ArrayView3, Axis, IxDyn, s};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{
    Checkpoint, CheckpointMeta, MODEL_NS, Normalization, OPTIM_NS, ParamStore, Strictness,
    apply_to_store, load as load_checkpoint, save as save_archive,
};
use crate::error::{Error, Result};
use crate::losses::{AnnealSchedule, LossBreakdown};
use crate::metrics::auc_from_scores;

use super::optim::{AdamState, cosine_lr};
use super::{DualBranchModel, EvidentialScore};

/// Loop hyperparameters, desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: u32,
    /// Peak learning rate; decays to zero on a cosine over the run.
    pub learning_rate: f64,
    /// Initial calibration trade-off; anneals toward 1 across the run.
    pub lambda0: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 5,
            learning_rate: 5e-4,
            lambda0: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate out of range: {}",
                self.learning_rate
            )));
        }
        AnnealSchedule::new(self.lambda0, self.epochs).map(|_| ())
    }
}

/// Best validation result seen so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestMark {
    pub epoch: u32,
    pub val_auc: f64,
}

/// Mutable loop state carried across epochs and checkpoints.
pub struct TrainState {
    /// Completed epochs.
    pub epoch: u32,
    pub total_epochs: u32,
    pub seed: u64,
    pub optimizer: AdamState,
    pub best: Option<BestMark>,
}

impl TrainState {
    pub fn new(model: &DualBranchModel, total_epochs: u32, seed: u64) -> Self {
        Self {
            epoch: 0,
            total_epochs,
            seed,
            optimizer: AdamState::new(model.store()),
            best: None,
        }
    }
}

/// In-memory training inputs. Images are already normalized; labels align
/// with the leading axis.
pub struct TrainData {
    pub train_images: Array3<f64>,
    pub train_labels: Vec<u8>,
    pub val_images: Array3<f64>,
    pub val_labels: Vec<u8>,
    /// Normalization that produced the image values, recorded in
    /// checkpoints so scoring can reproduce it.
    pub normalization: Normalization,
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based count of completed epochs.
    pub epoch: u32,
    /// Mean per-batch losses across the epoch.
    pub losses: LossBreakdown,
    /// Validation AUC; absent when the validation set lacks both classes.
    pub val_auc: Option<f64>,
}

/// What a call to [`run_training`] did.
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

/// One optimizer update on one batch. Fails with a diagnostic dump if the
/// loss degenerates.
pub fn train_step(
    model: &mut DualBranchModel,
    state: &mut TrainState,
    images: ArrayView3<'_, f64>,
    labels: &[u8],
    schedule: &AnnealSchedule,
    learning_rate: f64,
    dropout_rng: Option<&mut ChaCha20Rng>,
) -> Result<LossBreakdown> {
    let mut fwd = model.forward_train(images, labels, dropout_rng)?;
    let graph = model.compute_losses(&mut fwd, schedule, state.epoch)?;
    if !graph.values.total.is_finite() {
        let out = &fwd.output;
        let fakes = labels.iter().filter(|&&y| y == 1).count();
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let p = bounds(&mut out.p_fused.iter().copied());
        let u = bounds(&mut out.main.iter().map(|s| s.uncertainty));
        return Err(Error::Numeric(format!(
            "non-finite loss {:?} at epoch {}: batch of {} ({} fake), fused p in [{:.3e}, {:.3e}], main u in [{:.3e}, {:.3e}]",
            graph.values, state.epoch, labels.len(), fakes, p.0, p.1, u.0, u.1
        )));
    }
    let grads = model.gradients(&fwd, graph.total);
    state
        .optimizer
        .apply(model.store_mut(), &grads, learning_rate);
    Ok(graph.values)
}

/// Score a stack of images with the main branch, in chunks.
pub fn score_images(
    model: &DualBranchModel,
    images: ArrayView3<'_, f64>,
    chunk: usize,
) -> Result<Vec<EvidentialScore>> {
    let n = images.dim().0;
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(n);
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        out.extend(model.forward_inference(images.slice(s![lo..hi, .., ..]))?);
        lo = hi;
    }
    Ok(out)
}

/// File name of the rolling checkpoint written after every epoch.
pub const FINAL_CKPT: &str = "final.ckpt";
/// File name of the best-validation checkpoint.
pub const BEST_CKPT: &str = "best.ckpt";
/// File name of the per-epoch loss/metric log.
pub const METRICS_CSV: &str = "metrics.csv";

const METRICS_HEADER: &str = "epoch,edu_main,edu_aux,ce_fused,dec,total,val_auc";

/// Train `model` for up to `cfg.epochs` epochs (or `stop_after` completed
/// epochs, to exercise interruption). When `out_dir` is given, appends to
/// the metrics log and maintains rolling and best checkpoints there.
/// `resume_from` restores weights, optimizer state, and the epoch counter
/// from an earlier rolling checkpoint; the run then continues exactly as if
/// it had never stopped.
pub fn run_training(
    model: &mut DualBranchModel,
    cfg: &TrainConfig,
    data: &TrainData,
    seed: u64,
    out_dir: Option<&Path>,
    resume_from: Option<&Path>,
    stop_after: Option<u32>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.train_images.dim().0;
    if n == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if data.train_labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} training images but {} labels",
            data.train_labels.len()
        )));
    }
    if data.val_labels.len() != data.val_images.dim().0 {
        return Err(Error::InvalidInput(format!(
            "{} validation images but {} labels",
            data.val_images.dim().0,
            data.val_labels.len()
        )));
    }
    let schedule = AnnealSchedule::new(cfg.lambda0, cfg.epochs)?;
    let mut state = TrainState::new(model, cfg.epochs, seed);
    if let Some(path) = resume_from {
        let ckpt = load_checkpoint(path)?;
        if ckpt.meta.total_epochs != cfg.epochs {
            return Err(Error::Config(format!(
                "checkpoint was a {}-epoch run, config says {}",
                ckpt.meta.total_epochs, cfg.epochs
            )));
        }
        if ckpt.meta.seed != seed {
            return Err(Error::Config(format!(
                "checkpoint used seed {}, run requested {seed}",
                ckpt.meta.seed
            )));
        }
        apply_to_store(model.store_mut(), &ckpt, Strictness::Strict)?;
        restore_optimizer(&mut state.optimizer, &ckpt, model.store())?;
        state.epoch = ckpt.meta.epoch;
        state.best = match (ckpt.meta.best_val_auc, ckpt.meta.best_epoch) {
            (Some(val_auc), Some(epoch)) => Some(BestMark { epoch, val_auc }),
            _ => None,
        };
    }

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(open_metrics_log(&dir.join(METRICS_CSV), state.epoch == 0)?)
        }
        None => None,
    };

    let until = stop_after
        .map_or(cfg.epochs, |extra| state.epoch.saturating_add(extra))
        .min(cfg.epochs);
    let mut history = Vec::new();
    while state.epoch < until {
        let epoch = state.epoch;
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, &mut epoch_rng(seed, epoch, SHUFFLE_SALT));
        let mut drop_rng = epoch_rng(seed, epoch, DROPOUT_SALT);

        let size = data.train_images.dim().1;
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for chunk_ids in order.chunks(cfg.batch_size) {
            let mut batch = Array3::<f64>::zeros((chunk_ids.len(), size, size));
            let mut labels = Vec::with_capacity(chunk_ids.len());
            for (bi, &i) in chunk_ids.iter().enumerate() {
                batch
                    .index_axis_mut(Axis(0), bi)
                    .assign(&data.train_images.index_axis(Axis(0), i));
                labels.push(data.train_labels[i]);
            }
            let losses = train_step(
                model,
                &mut state,
                batch.view(),
                &labels,
                &schedule,
                lr,
                Some(&mut drop_rng),
            )?;
            for (slot, v) in sums.iter_mut().zip([
                losses.edu_main,
                losses.edu_aux,
                losses.ce_fused,
                losses.dec,
                losses.total,
            ]) {
                *slot += v;
            }
            batches += 1;
        }
        let b = batches as f64;
        let losses = LossBreakdown {
            edu_main: sums[0] / b,
            edu_aux: sums[1] / b,
            ce_fused: sums[2] / b,
            dec: sums[3] / b,
            total: sums[4] / b,
        };

        let val_auc = if data.val_images.dim().0 > 0 {
            let scores = score_images(model, data.val_images.view(), 64)?;
            let ps: Vec<f64> = scores.iter().map(|s| s.p).collect();
            auc_from_scores(&ps, &data.val_labels).ok()
        } else {
            None
        };

        state.epoch = epoch + 1;
        let record = EpochRecord {
            epoch: state.epoch,
            losses,
            val_auc,
        };
        if let Some(auc) = val_auc {
            let improved = state.best.is_none_or(|b| auc > b.val_auc);
            if improved {
                state.best = Some(BestMark {
                    epoch: state.epoch,
                    val_auc: auc,
                });
                if let Some(dir) = out_dir {
                    save_checkpoint(&dir.join(BEST_CKPT), model, &state, &data.normalization)?;
                }
            }
        }
        if let Some(log) = log.as_mut() {
            writeln!(
                log,
                "{},{},{},{},{},{},{}",
                record.epoch,
                losses.edu_main,
                losses.edu_aux,
                losses.ce_fused,
                losses.dec,
                losses.total,
                val_auc.map_or_else(|| "NaN".to_string(), |v| v.to_string())
            )?;
            log.flush()?;
        }
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join(FINAL_CKPT), model, &state, &data.normalization)?;
        }
        history.push(record);
    }
    Ok(TrainOutcome { state, history })
}

/// Write model parameters, optimizer state, and run metadata as one
/// archive.
pub fn save_checkpoint(
    path: &Path,
    model: &DualBranchModel,
    state: &TrainState,
    normalization: &Normalization,
) -> Result<()> {
    let meta = CheckpointMeta {
        format_version: 1,
        config: serde_json::to_value(model.config())
            .map_err(|e| Error::Format(format!("config encoding failed: {e}")))?,
        normalization: normalization.clone(),
        epoch: state.epoch,
        total_epochs: state.total_epochs,
        seed: state.seed,
        best_val_auc: state.best.map(|b| b.val_auc),
        best_epoch: state.best.map(|b| b.epoch),
    };
    let mut tensors: Vec<(String, ArrayD<f64>)> = model
        .store()
        .iter()
        .map(|(_, name, v)| (format!("{MODEL_NS}{name}"), v.clone()))
        .collect();
    let (m, v) = state.optimizer.moments();
    for (id, name, _) in model.store().iter() {
        tensors.push((format!("{OPTIM_NS}m/{name}"), m[id].clone()));
        tensors.push((format!("{OPTIM_NS}v/{name}"), v[id].clone()));
    }
    tensors.push((
        format!("{OPTIM_NS}step"),
        ArrayD::from_elem(IxDyn(&[1]), state.optimizer.step as f64),
    ));
    save_archive(path, &meta, &tensors)
}

/// Save only the main branch (backbone and head) — the deployment artifact.
/// Optimizer state and the auxiliary branch are stripped; metadata is
/// carried over.
pub fn export_main(path: &Path, model: &DualBranchModel, meta: &CheckpointMeta) -> Result<()> {
    let tensors: Vec<(String, ArrayD<f64>)> = model
        .store()
        .iter()
        .filter(|(_, name, _)| name.starts_with("main."))
        .map(|(_, name, v)| (format!("{MODEL_NS}{name}"), v.clone()))
        .collect();
    save_archive(path, meta, &tensors)
}

fn restore_optimizer(opt: &mut AdamState, ckpt: &Checkpoint, store: &ParamStore) -> Result<()> {
    let step = ckpt
        .tensor(&format!("{OPTIM_NS}step"))
        .ok_or_else(|| Error::Data("checkpoint carries no optimizer state".into()))?
        .iter()
        .copied()
        .next()
        .unwrap_or(0.0) as u64;
    let mut m = Vec::with_capacity(store.len());
    let mut v = Vec::with_capacity(store.len());
    for (_, name, value) in store.iter() {
        for (list, ns) in [(&mut m, "m"), (&mut v, "v")] {
            let tensor = ckpt
                .tensor(&format!("{OPTIM_NS}{ns}/{name}"))
                .ok_or_else(|| {
                    Error::Data(format!("checkpoint misses optimizer moment {ns}/{name}"))
                })?;
            if tensor.shape() != value.shape() {
                return Err(Error::Data(format!(
                    "optimizer moment {ns}/{name} has shape {:?}, parameter has {:?}",
                    tensor.shape(),
                    value.shape()
                )));
            }
            list.push(tensor.clone());
        }
    }
    opt.restore(step, m, v);
    Ok(())
}

fn open_metrics_log(path: &Path, fresh: bool) -> Result<File> {
    if fresh || !path.exists() {
        let mut f = File::create(path)?;
        writeln!(f, "{METRICS_HEADER}")?;
        Ok(f)
    } else {
        Ok(OpenOptions::new().append(true).open(path)?)
    }
}

const SHUFFLE_SALT: u64 = 0x5348_5546_464c_45;
const DROPOUT_SALT: u64 = 0x44_524f_504f_5554;

/// Derive an epoch-specific stream so shuffling depends only on
/// `(seed, epoch)` — the property that makes resumed runs replay the exact
/// batch order.
fn epoch_rng(seed: u64, epoch: u32, salt: u64) -> ChaCha20Rng {
    let mut z = seed
        ^ salt.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(u64::from(epoch) + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha20Rng::seed_from_u64(z ^ (z >> 31))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ViTConfig;
    use crate::framework::ModelConfig;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            vit: ViTConfig {
                image_size: 8,
                patch_size: 4,
                embed_dim: 16,
                depth: 1,
                heads: 2,
                mlp_ratio: 2.0,
                drop_rate: 0.0,
            },
            ..ModelConfig::default()
        }
    }

    /// Trivially separable data: real images are dim and smooth, fake ones
    /// carry a bright block.
    fn blob_data(n_per_class: usize, size: usize) -> TrainData {
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let total = 2 * n_per_class;
        let mut images = Array3::<f64>::zeros((total, size, size));
        let mut labels = Vec::with_capacity(total);
        for i in 0..total {
            let fake = i % 2 == 1;
            let mut img = images.index_axis_mut(Axis(0), i);
            for v in img.iter_mut() {
                *v = rng.random::<f64>() * 0.2 - 0.5;
            }
            if fake {
                for y in 0..size / 2 {
                    for x in 0..size / 2 {
                        img[[y, x]] += 1.5;
                    }
                }
            }
            labels.push(u8::from(fake));
        }
        let val_images = images.clone();
        let val_labels = labels.clone();
        TrainData {
            train_images: images,
            train_labels: labels,
            val_images,
            val_labels,
            normalization: Normalization {
                mean: vec![0.5],
                std: vec![1.0],
            },
        }
    }

    fn tiny_train_cfg(epochs: u32) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            epochs,
            learning_rate: 3e-3,
            lambda0: 0.01,
        }
    }

    fn params_of(model: &DualBranchModel) -> Vec<ArrayD<f64>> {
        model.store().iter().map(|(_, _, v)| v.clone()).collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let mut model = DualBranchModel::new(&tiny_cfg(), 1).unwrap();
        let before = params_of(&model);
        let mut state = TrainState::new(&model, 5, 1);
        let data = blob_data(4, 8);
        let schedule = AnnealSchedule::new(0.01, 5).unwrap();
        train_step(
            &mut model,
            &mut state,
            data.train_images.slice(s![0..4, .., ..]),
            &data.train_labels[0..4],
            &schedule,
            0.0,
            None,
        )
        .unwrap();
        assert_eq!(params_of(&model), before);
    }

    #[test]
    fn poisoned_weights_fail_with_a_numeric_diagnostic() {
        let mut model = DualBranchModel::new(&tiny_cfg(), 1).unwrap();
        let id = model.store().id("fused.head.weight").unwrap();
        model.store_mut().value_mut(id).fill(f64::NAN);
        let mut state = TrainState::new(&model, 5, 1);
        let data = blob_data(2, 8);
        let schedule = AnnealSchedule::new(0.01, 5).unwrap();
        let err = train_step(
            &mut model,
            &mut state,
            data.train_images.view(),
            &data.train_labels,
            &schedule,
            1e-3,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("batch of 4"));
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let data = blob_data(8, 8);
        let cfg = tiny_train_cfg(2);
        let run = || {
            let mut model = DualBranchModel::new(&tiny_cfg(), 7).unwrap();
            let out = run_training(&mut model, &cfg, &data, 42, None, None, None).unwrap();
            (out.history, params_of(&model))
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn training_reduces_the_loss_on_separable_blobs() {
        let data = blob_data(16, 8);
        let cfg = tiny_train_cfg(3);
        let mut model = DualBranchModel::new(&tiny_cfg(), 3).unwrap();
        let out = run_training(&mut model, &cfg, &data, 5, None, None, None).unwrap();
        let first = out.history.first().unwrap().losses.total;
        let last = out.history.last().unwrap().losses.total;
        assert!(
            last < first,
            "loss should drop on separable data: {first} -> {last}"
        );
    }

    #[test]
    fn resume_replays_the_interrupted_run_exactly() {
        let data = blob_data(8, 8);
        let cfg = tiny_train_cfg(4);
        let dir = tempfile::tempdir().unwrap();

        let mut straight = DualBranchModel::new(&tiny_cfg(), 9).unwrap();
        let full = run_training(&mut straight, &cfg, &data, 11, None, None, None).unwrap();

        let part_dir = dir.path().join("run");
        let mut interrupted = DualBranchModel::new(&tiny_cfg(), 9).unwrap();
        let first_half = run_training(
            &mut interrupted,
            &cfg,
            &data,
            11,
            Some(&part_dir),
            None,
            Some(2),
        )
        .unwrap();
        assert_eq!(first_half.state.epoch, 2);

        // A brand-new process: fresh model object, weights from the rolling
        // checkpoint.
        let mut resumed = DualBranchModel::new(&tiny_cfg(), 9).unwrap();
        let ckpt = part_dir.join(FINAL_CKPT);
        let rest = run_training(
            &mut resumed,
            &cfg,
            &data,
            11,
            Some(&part_dir),
            Some(&ckpt),
            None,
        )
        .unwrap();
        assert_eq!(rest.state.epoch, 4);
        assert_eq!(params_of(&resumed), params_of(&straight));
        assert_eq!(rest.history, full.history[2..].to_vec());

        // The appended log covers all four epochs exactly once.
        let log = std::fs::read_to_string(part_dir.join(METRICS_CSV)).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("epoch,"));
        assert!(lines[4].starts_with("4,"));
    }

    #[test]
    fn resume_rejects_mismatched_plans() {
        let data = blob_data(4, 8);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut model = DualBranchModel::new(&tiny_cfg(), 2).unwrap();
        run_training(&mut model, &tiny_train_cfg(2), &data, 1, Some(&out), None, None).unwrap();
        let ckpt = out.join(FINAL_CKPT);
        let mut fresh = DualBranchModel::new(&tiny_cfg(), 2).unwrap();
        assert!(matches!(
            run_training(&mut fresh, &tiny_train_cfg(3), &data, 1, None, Some(&ckpt), None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            run_training(&mut fresh, &tiny_train_cfg(2), &data, 9, None, Some(&ckpt), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoints_carry_meta_and_best_mark() {
        let data = blob_data(8, 8);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_train_cfg(2);
        let mut model = DualBranchModel::new(&tiny_cfg(), 4).unwrap();
        let outcome = run_training(&mut model, &cfg, &data, 21, Some(&out), None, None).unwrap();
        assert!(outcome.state.best.is_some());

        let ckpt = load_checkpoint(&out.join(FINAL_CKPT)).unwrap();
        assert_eq!(ckpt.meta.epoch, 2);
        assert_eq!(ckpt.meta.total_epochs, 2);
        assert_eq!(ckpt.meta.seed, 21);
        assert_eq!(ckpt.meta.normalization, data.normalization);
        assert!(ckpt.meta.best_val_auc.is_some());
        assert!(out.join(BEST_CKPT).exists());

        // The stored config rebuilds the same architecture.
        let parsed: ModelConfig = serde_json::from_value(ckpt.meta.config.clone()).unwrap();
        assert_eq!(&parsed, model.config());
    }

    #[test]
    fn export_keeps_only_the_scoring_branch() {
        let data = blob_data(4, 8);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_train_cfg(1);
        let mut model = DualBranchModel::new(&tiny_cfg(), 6).unwrap();
        run_training(&mut model, &cfg, &data, 2, Some(&out), None, None).unwrap();

        let full = load_checkpoint(&out.join(FINAL_CKPT)).unwrap();
        let slim_path = out.join("main-only.ckpt");
        export_main(&slim_path, &model, &full.meta).unwrap();

        let slim = load_checkpoint(&slim_path).unwrap();
        assert!(slim.tensors.iter().all(|(n, _)| n.starts_with("model/main.")));
        assert!(slim.tensors.len() < full.tensors.len());

        // Loading the slim archive into a fresh model restores scoring
        // behavior even though the auxiliary branch stays at init.
        let mut fresh = DualBranchModel::new(&tiny_cfg(), 999).unwrap();
        let report = apply_to_store(fresh.store_mut(), &slim, Strictness::Lenient).unwrap();
        assert!(report.unexpected.is_empty());
        assert!(report.shape_mismatch.is_empty());
        assert!(report.missing.iter().all(|n| !n.starts_with("main.")));
        let images = data.val_images.slice(s![0..2, .., ..]);
        let want = model.forward_inference(images).unwrap();
        let got = fresh.forward_inference(images).unwrap();
        assert_eq!(want, got);
    }
}
