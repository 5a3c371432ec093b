//! Dual-branch competitive model.
//!
//! Two unshared encoders see the same image batch. Each has its own
//! evidential head; their features are blended by uncertainty-weighted
//! fusion and classified once more by a fused head. Training adds a
//! decorrelation penalty between the branch features, with a gradient stop
//! so the pressure to diverge lands on one branch only (by default the
//! auxiliary one — the main branch stays a pure classifier). Inference uses
//! the main branch alone.

pub mod optim;
pub mod train;

use ndarray::{Array1, Array2, ArrayD, ArrayView3, Ix2, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{
    AttentionStack, ParamId, ParamStore, TapeBinding, ViT, ViTConfig, attention_rollout,
    class_token_heatmap, trunc_normal,
};
use crate::error::{Error, Result};
use crate::evidential::{Activation, DirichletSummary, LOGIT_CLAMP, evidence_from_logits};
use crate::fusion::FusionWeights;
use crate::losses::{AnnealSchedule, DEC_EPS, DecorrelationMode, LOG_EPS, LossBreakdown};
use crate::tensor::{NodeId, Tape};

/// Real vs. fake.
pub const NUM_CLASSES: usize = 2;
/// Class index of forged images; class 0 is genuine.
pub const FAKE_CLASS: usize = 1;

/// Which branch's feature is frozen inside the decorrelation penalty. The
/// frozen branch feels no decorrelation gradient; the other branch is pushed
/// away from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopSide {
    /// Freeze the main feature, reshaping only the auxiliary branch — the
    /// default, keeping the main branch optimized purely for classification.
    #[default]
    Main,
    /// Freeze the auxiliary feature instead (ablation).
    Aux,
}

/// Everything needed to build a [`DualBranchModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vit: ViTConfig,
    /// Evidence activation for both branch heads.
    pub activation: Activation,
    pub stop_side: StopSide,
    pub decorrelation_mode: DecorrelationMode,
    /// Disable to train the two branches without the competitive penalty.
    pub use_decorrelation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vit: ViTConfig::default(),
            activation: Activation::default(),
            stop_side: StopSide::default(),
            decorrelation_mode: DecorrelationMode::default(),
            use_decorrelation: true,
        }
    }
}

struct Head {
    weight: ParamId,
    bias: ParamId,
}

impl Head {
    fn init(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut ChaCha20Rng) -> Self {
        Self {
            weight: store.register(
                format!("{prefix}weight"),
                trunc_normal(rng, &[dim, NUM_CLASSES], 0.02),
            ),
            bias: store.register(format!("{prefix}bias"), ArrayD::zeros(IxDyn(&[NUM_CLASSES]))),
        }
    }
}

/// The complete two-branch model with its parameter store.
pub struct DualBranchModel {
    cfg: ModelConfig,
    store: ParamStore,
    main: ViT,
    aux: ViT,
    head_main: Head,
    head_aux: Head,
    head_fused: Head,
}

/// Tape nodes of one branch's evidential pathway, all rows aligned with the
/// batch.
pub struct BranchNodes {
    /// Class-token features, (batch, dim).
    pub features: NodeId,
    /// Non-negative evidence, (batch, 2).
    pub evidence: NodeId,
    /// Concentration `evidence + 1`, (batch, 2).
    pub alpha: NodeId,
    /// Total strength per sample, (batch,).
    pub strength: NodeId,
    /// `2 / strength`, (batch,).
    pub uncertainty: NodeId,
    /// `alpha / strength`, (batch, 2).
    pub belief: NodeId,
}

/// Plain-value view of one training forward pass.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Main-branch features, (batch, dim).
    pub f_main: Array2<f64>,
    /// Auxiliary-branch features, (batch, dim).
    pub f_aux: Array2<f64>,
    pub main: Vec<DirichletSummary>,
    pub aux: Vec<DirichletSummary>,
    pub weights: Vec<FusionWeights>,
    /// Fused head's fake-class probability per sample.
    pub p_fused: Vec<f64>,
    pub labels: Vec<u8>,
}

/// One recorded training forward pass: the tape, the parameter binding that
/// maps tape leaves back to the store, the nodes losses hang off, and the
/// extracted values.
pub struct TrainForward {
    pub tape: Tape,
    pub binding: TapeBinding,
    pub main: BranchNodes,
    pub aux: BranchNodes,
    /// Fusion weight of the main branch, (batch,).
    pub weight_main: NodeId,
    /// Fusion weight of the auxiliary branch, (batch,).
    pub weight_aux: NodeId,
    /// Fused feature, (batch, dim).
    pub fused: NodeId,
    /// Fused fake-class probability, (batch,).
    pub p_fused: NodeId,
    pub output: BatchOutput,
}

/// Loss nodes built on top of a [`TrainForward`], plus their values.
pub struct LossGraph {
    pub total: NodeId,
    pub edu_main: NodeId,
    pub edu_aux: NodeId,
    pub ce_fused: NodeId,
    /// Absent when decorrelation is disabled.
    pub dec: Option<NodeId>,
    pub values: LossBreakdown,
}

/// Main-branch verdict for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidentialScore {
    /// Fake-class belief mass, in (0, 1).
    pub p: f64,
    /// Dirichlet uncertainty, in (0, 1].
    pub u: f64,
}

/// Attention-rollout saliency for one image.
#[derive(Debug, Clone)]
pub struct RolloutMap {
    /// Token-to-token rollout; every row sums to 1.
    pub matrix: Array2<f64>,
    /// Class-token attendance folded onto the patch grid; sums to 1.
    pub heatmap: Array2<f64>,
}

impl DualBranchModel {
    /// Build a freshly initialized model. Both branches and all three heads
    /// draw from one seeded stream, so a seed pins every parameter.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.vit.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let main = ViT::init(&cfg.vit, &mut store, "main.backbone.", &mut rng)?;
        let aux = ViT::init(&cfg.vit, &mut store, "aux.backbone.", &mut rng)?;
        let dim = cfg.vit.embed_dim;
        let head_main = Head::init(&mut store, "main.head.", dim, &mut rng);
        let head_aux = Head::init(&mut store, "aux.head.", dim, &mut rng);
        let head_fused = Head::init(&mut store, "fused.head.", dim, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            store,
            main,
            aux,
            head_main,
            head_aux,
            head_fused,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Overwrite every auxiliary-branch parameter with its main-branch twin,
    /// making the branches computationally identical.
    pub fn copy_main_into_aux(&mut self) {
        let pairs: Vec<(ParamId, ParamId)> = self
            .store
            .iter()
            .filter_map(|(id, name, _)| {
                let suffix = name.strip_prefix("main.")?;
                let twin = self
                    .store
                    .id(&format!("aux.{suffix}"))
                    .expect("every main parameter has an aux twin");
                Some((id, twin))
            })
            .collect();
        for (src, dst) in pairs {
            let v = self.store.value(src).clone();
            *self.store.value_mut(dst) = v;
        }
    }

    /// One training forward pass over both branches, fusion, and the fused
    /// head. `dropout_rng` enables dropout when the config has a positive
    /// rate.
    pub fn forward_train(
        &self,
        images: ArrayView3<'_, f64>,
        labels: &[u8],
        mut dropout_rng: Option<&mut ChaCha20Rng>,
    ) -> Result<TrainForward> {
        let batch = images.dim().0;
        if labels.len() != batch {
            return Err(Error::InvalidInput(format!(
                "{batch} images but {} labels",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidInput(format!(
                "labels must be 0 (real) or 1 (fake), got {bad}"
            )));
        }

        let mut tape = Tape::new();
        let mut binding = TapeBinding::new();
        let main = self.branch_nodes(
            &mut tape,
            &mut binding,
            &self.main,
            &self.head_main,
            images,
            dropout_rng.as_deref_mut(),
        )?;
        let aux = self.branch_nodes(
            &mut tape,
            &mut binding,
            &self.aux,
            &self.head_aux,
            images,
            dropout_rng.as_deref_mut(),
        )?;

        // Fusion: the less uncertain branch earns the larger convex weight,
        // via a sigmoid of the uncertainty gap. The complement is formed as
        // 1 - w so the pair sums to 1 exactly.
        let gap = tape.sub(aux.uncertainty, main.uncertainty);
        let weight_main = tape.sigmoid(gap);
        let neg = tape.scale(weight_main, -1.0);
        let weight_aux = tape.add_scalar(neg, 1.0);
        let main_part = tape.mul_rows(main.features, weight_main);
        let aux_part = tape.mul_rows(aux.features, weight_aux);
        let fused = tape.add(main_part, aux_part);

        let fw = binding.bind(&mut tape, &self.store, self.head_fused.weight);
        let fb = binding.bind(&mut tape, &self.store, self.head_fused.bias);
        let fused_logits = tape.linear(fused, fw, fb);
        let fused_probs = tape.row_softmax(fused_logits);
        let p_fused = tape.gather_rows(fused_probs, vec![FAKE_CLASS; batch]);

        let output = self.extract_output(&tape, &main, &aux, weight_main, weight_aux, p_fused, labels)?;
        Ok(TrainForward {
            tape,
            binding,
            main,
            aux,
            weight_main,
            weight_aux,
            fused,
            p_fused,
            output,
        })
    }

    /// Loss terms over a recorded forward pass: per-branch evidential terms
    /// (log-likelihood plus annealed calibration, batch sums), fused-head
    /// cross-entropy (batch mean), and the decorrelation penalty (batch mean,
    /// with the configured branch frozen). The total is their plain sum.
    pub fn compute_losses(
        &self,
        fwd: &mut TrainForward,
        schedule: &AnnealSchedule,
        epoch: u32,
    ) -> Result<LossGraph> {
        let lambda = schedule.factor(epoch)?;
        let labels = fwd.output.labels.clone();
        let preds_main: Vec<usize> = fwd.output.main.iter().map(|s| s.predicted_class).collect();
        let preds_aux: Vec<usize> = fwd.output.aux.iter().map(|s| s.predicted_class).collect();

        let tape = &mut fwd.tape;
        let edu_main = edu_node(tape, &fwd.main, &labels, &preds_main, lambda);
        let edu_aux = edu_node(tape, &fwd.aux, &labels, &preds_aux, lambda);
        let ce_fused = ce_node(tape, fwd.p_fused, &labels);
        let dec = self.cfg.use_decorrelation.then(|| {
            let (fm, fa) = match self.cfg.stop_side {
                StopSide::Main => (tape.detach(fwd.main.features), fwd.aux.features),
                StopSide::Aux => (fwd.main.features, tape.detach(fwd.aux.features)),
            };
            let rho = tape.pearson_rows(fm, fa, DEC_EPS);
            let rho = match self.cfg.decorrelation_mode {
                DecorrelationMode::Signed => rho,
                DecorrelationMode::Absolute => tape.abs(rho),
            };
            mean_node(tape, rho)
        });

        let mut total = tape.add(edu_main, edu_aux);
        total = tape.add(total, ce_fused);
        if let Some(d) = dec {
            total = tape.add(total, d);
        }

        let values = LossBreakdown::new(
            tape.scalar(edu_main),
            tape.scalar(edu_aux),
            tape.scalar(ce_fused),
            dec.map_or(0.0, |d| tape.scalar(d)),
        );
        Ok(LossGraph {
            total,
            edu_main,
            edu_aux,
            ce_fused,
            dec,
            values,
        })
    }

    /// Backpropagate from `root` and collect per-parameter gradients,
    /// aligned with the store by id. Parameters the root does not reach
    /// stay `None`.
    pub fn gradients(&self, fwd: &TrainForward, root: NodeId) -> Vec<Option<ArrayD<f64>>> {
        let grads = fwd.tape.backward(root);
        let mut out: Vec<Option<ArrayD<f64>>> = (0..self.store.len()).map(|_| None).collect();
        for &(pid, nid) in fwd.binding.pairs() {
            if let Some(g) = grads.get(nid) {
                match &mut out[pid] {
                    Some(acc) => *acc += g,
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        out
    }

    /// Score a batch with the main branch only; the auxiliary branch is
    /// never executed.
    pub fn forward_inference(&self, images: ArrayView3<'_, f64>) -> Result<Vec<EvidentialScore>> {
        let mut tape = Tape::new();
        let mut binding = TapeBinding::new();
        let enc = self
            .main
            .forward(&mut tape, &self.store, &mut binding, images, None, false)?;
        let w = binding.bind(&mut tape, &self.store, self.head_main.weight);
        let b = binding.bind(&mut tape, &self.store, self.head_main.bias);
        let logits = tape.linear(enc.features, w, b);
        let lv = tape
            .value(logits)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("head output is 2-D");
        let mut out = Vec::with_capacity(lv.nrows());
        for row in lv.rows() {
            let evidence = evidence_from_logits(&[row[0], row[1]], self.cfg.activation)?;
            let summary = crate::evidential::dirichlet_summary(&evidence);
            out.push(EvidentialScore {
                p: summary.belief[FAKE_CLASS],
                u: summary.uncertainty,
            });
        }
        Ok(out)
    }

    /// Evaluation-mode features of both branches, for measuring how far the
    /// branches have diverged.
    pub fn forward_features(
        &self,
        images: ArrayView3<'_, f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::new();
        let mut binding = TapeBinding::new();
        let m = self
            .main
            .forward(&mut tape, &self.store, &mut binding, images, None, false)?;
        let a = self
            .aux
            .forward(&mut tape, &self.store, &mut binding, images, None, false)?;
        let fm = tape
            .value(m.features)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("features are 2-D")
            .to_owned();
        let fa = tape
            .value(a.features)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("features are 2-D")
            .to_owned();
        Ok((fm, fa))
    }

    /// Attention-rollout saliency of the main branch: per image, the full
    /// token-to-token rollout matrix (rows sum to 1) and the class-token
    /// patch-grid heatmap (sums to 1).
    pub fn rollout_heatmaps(&self, images: ArrayView3<'_, f64>) -> Result<Vec<RolloutMap>> {
        let mut tape = Tape::new();
        let mut binding = TapeBinding::new();
        let enc = self
            .main
            .forward(&mut tape, &self.store, &mut binding, images, None, true)?;
        let layers = enc.attention.expect("attention was requested");
        let grid = self.cfg.vit.grid();
        let batch = images.dim().0;
        let mut out = Vec::with_capacity(batch);
        for i in 0..batch {
            let stack = AttentionStack::from_batch(&layers, i)?;
            let matrix = attention_rollout(&stack)?;
            let heatmap = class_token_heatmap(&matrix, grid)?;
            out.push(RolloutMap { matrix, heatmap });
        }
        Ok(out)
    }

    /// Rebuild a model from a checkpoint for inference. Accepts slim
    /// archives: anything covering the whole scoring branch with no shape
    /// conflicts.
    pub fn load_for_scoring(path: &std::path::Path) -> Result<(Self, crate::backbone::CheckpointMeta)> {
        let ckpt = crate::backbone::load(path)?;
        let model_cfg: ModelConfig = serde_json::from_value(ckpt.meta.config.clone())
            .map_err(|e| Error::Config(format!("checkpoint carries an unusable config: {e}")))?;
        let mut model = Self::new(&model_cfg, 0)?;
        let report = crate::backbone::apply_to_store(
            model.store_mut(),
            &ckpt,
            crate::backbone::Strictness::Lenient,
        )?;
        if !report.shape_mismatch.is_empty() {
            return Err(Error::Data(format!(
                "checkpoint {} does not fit the model: shape mismatch on {}",
                path.display(),
                report.shape_mismatch.join(", ")
            )));
        }
        let gaps: Vec<&String> = report
            .missing
            .iter()
            .filter(|n| n.starts_with("main."))
            .collect();
        if !gaps.is_empty() {
            return Err(Error::Data(format!(
                "checkpoint {} does not cover the scoring branch: missing {} parameter(s)",
                path.display(),
                gaps.len()
            )));
        }
        Ok((model, ckpt.meta))
    }

    /// The evidential pathway of one branch (encoder, head, evidence,
    /// Dirichlet quantities) as tape nodes.
    fn branch_nodes(
        &self,
        tape: &mut Tape,
        binding: &mut TapeBinding,
        encoder: &ViT,
        head: &Head,
        images: ArrayView3<'_, f64>,
        dropout_rng: Option<&mut ChaCha20Rng>,
    ) -> Result<BranchNodes> {
        let enc = encoder.forward(tape, &self.store, binding, images, dropout_rng, false)?;
        let w = binding.bind(tape, &self.store, head.weight);
        let b = binding.bind(tape, &self.store, head.bias);
        let logits = tape.linear(enc.features, w, b);
        let evidence = match self.cfg.activation {
            Activation::ClampedExp => {
                let clamped = tape.clamp(logits, -LOGIT_CLAMP, LOGIT_CLAMP);
                tape.exp(clamped)
            }
            Activation::Relu => tape.relu(logits),
            Activation::Softplus => tape.softplus(logits),
        };
        let alpha = tape.add_scalar(evidence, 1.0);
        let strength = tape.sum_last(alpha);
        let uncertainty = tape.rdiv_scalar(strength, NUM_CLASSES as f64);
        let belief = tape.div_rows(alpha, strength);
        Ok(BranchNodes {
            features: enc.features,
            evidence,
            alpha,
            strength,
            uncertainty,
            belief,
        })
    }

    /// Read plain values out of the tape for the batch record.
    fn extract_output(
        &self,
        tape: &Tape,
        main: &BranchNodes,
        aux: &BranchNodes,
        weight_main: NodeId,
        weight_aux: NodeId,
        p_fused: NodeId,
        labels: &[u8],
    ) -> Result<BatchOutput> {
        let as2 = |id: NodeId| {
            tape.value(id)
                .view()
                .into_dimensionality::<Ix2>()
                .expect("2-D node")
                .to_owned()
        };
        let summaries = |branch: &BranchNodes| -> Result<Vec<DirichletSummary>> {
            let ev = tape
                .value(branch.evidence)
                .view()
                .into_dimensionality::<Ix2>()
                .expect("evidence is 2-D")
                .to_owned();
            ev.rows()
                .into_iter()
                .map(|r| crate::evidential::summarize(&[r[0], r[1]]))
                .collect()
        };
        let wm = tape.value(weight_main);
        let wa = tape.value(weight_aux);
        let weights = wm
            .iter()
            .zip(wa.iter())
            .map(|(&main, &aux)| FusionWeights { main, aux })
            .collect();
        Ok(BatchOutput {
            f_main: as2(main.features),
            f_aux: as2(aux.features),
            main: summaries(main)?,
            aux: summaries(aux)?,
            weights,
            p_fused: tape.value(p_fused).iter().copied().collect(),
            labels: labels.to_vec(),
        })
    }
}

/// One branch's evidential loss: negative log-belief of the true class plus
/// the annealed calibration term, both summed over the batch.
fn edu_node(
    tape: &mut Tape,
    branch: &BranchNodes,
    labels: &[u8],
    preds: &[usize],
    lambda: f64,
) -> NodeId {
    // ln S - ln alpha_y per sample, summed.
    let ln_strength = tape.ln(branch.strength);
    let alpha_true = tape.gather_rows(branch.alpha, labels.iter().map(|&y| y as usize).collect());
    let ln_alpha_true = tape.ln(alpha_true);
    let nll = tape.sub(ln_strength, ln_alpha_true);
    let edl = tape.sum_all(nll);

    // Calibration: confident-and-right samples push uncertainty down
    // (-lambda · p · ln(1-u)), wrong ones push it up
    // (-(1-lambda) · (1-p) · ln u). The predicted class is treated as a
    // fixed choice; gradients flow through p and u only. Logs are floored
    // to keep the u = 1 and u → 0 edges finite.
    let p = tape.gather_rows(branch.belief, preds.to_vec());
    let neg_u = tape.scale(branch.uncertainty, -1.0);
    let one_minus_u = tape.add_scalar(neg_u, 1.0);
    let floored = tape.clamp(one_minus_u, LOG_EPS, f64::INFINITY);
    let ln_one_minus_u = tape.ln(floored);
    let certain_terms = tape.mul(p, ln_one_minus_u);

    let neg_p = tape.scale(p, -1.0);
    let one_minus_p = tape.add_scalar(neg_p, 1.0);
    let floored_u = tape.clamp(branch.uncertainty, LOG_EPS, f64::INFINITY);
    let ln_u = tape.ln(floored_u);
    let uncertain_terms = tape.mul(one_minus_p, ln_u);

    let correct_mask: ArrayD<f64> = Array1::from_iter(
        labels
            .iter()
            .zip(preds)
            .map(|(&y, &c)| if usize::from(y) == c { 1.0 } else { 0.0 }),
    )
    .into_dyn();
    let wrong_mask = correct_mask.mapv(|m| 1.0 - m);
    let certain_sum = tape.weighted_sum(certain_terms, correct_mask);
    let uncertain_sum = tape.weighted_sum(uncertain_terms, wrong_mask);
    let calib_correct = tape.scale(certain_sum, -lambda);
    let calib_wrong = tape.scale(uncertain_sum, -(1.0 - lambda));
    let calibration = tape.add(calib_correct, calib_wrong);

    tape.add(edl, calibration)
}

/// Fused-head cross-entropy, averaged over the batch. The probability the
/// head assigns to the true label is clipped before the logarithm.
fn ce_node(tape: &mut Tape, p_fused: NodeId, labels: &[u8]) -> NodeId {
    let batch = labels.len();
    let neg = tape.scale(p_fused, -1.0);
    let one_minus_p = tape.add_scalar(neg, 1.0);
    let fake_mask: ArrayD<f64> =
        Array1::from_iter(labels.iter().map(|&y| f64::from(y))).into_dyn();
    let real_mask = fake_mask.mapv(|m| 1.0 - m);
    let fake_part = tape.mul_const(p_fused, fake_mask);
    let real_part = tape.mul_const(one_minus_p, real_mask);
    let p_true = tape.add(fake_part, real_part);
    let clipped = tape.clamp(p_true, LOG_EPS, 1.0 - LOG_EPS);
    let ln_p = tape.ln(clipped);
    let weights = ArrayD::from_elem(IxDyn(&[batch]), -1.0 / batch as f64);
    tape.weighted_sum(ln_p, weights)
}

/// Mean of a 1-D node as a scalar node.
fn mean_node(tape: &mut Tape, x: NodeId) -> NodeId {
    let n = tape.value(x).len();
    let weights = ArrayD::from_elem(IxDyn(&[n]), 1.0 / n as f64);
    tape.weighted_sum(x, weights)
}

/// Fill every parameter whose name passes `filter` with truncated-normal
/// noise — a test/ablation helper for wrecking one part of the model.
pub fn scramble_params(
    store: &mut ParamStore,
    rng: &mut ChaCha20Rng,
    filter: impl Fn(&str) -> bool,
) {
    let ids: Vec<ParamId> = store
        .iter()
        .filter(|(_, name, _)| filter(name))
        .map(|(id, _, _)| id)
        .collect();
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = trunc_normal(rng, &shape, 0.02);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{binary_cross_entropy, decorrelation_loss, edl_loss, euc_loss, EucSample};
    use ndarray::Array3;
    use rand::RngExt;

    const TOL: f64 = 1e-12;

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

    fn random_images(rng: &mut ChaCha20Rng, batch: usize, size: usize) -> Array3<f64> {
        Array3::from_shape_fn((batch, size, size), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn schedule() -> AnnealSchedule {
        AnnealSchedule::new(0.01, 5).unwrap()
    }

    #[test]
    fn shape_contract() {
        let cfg = ModelConfig::default();
        let model = DualBranchModel::new(&cfg, 7).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let images = random_images(&mut rng, 4, 32);
        let labels = [0u8, 1, 0, 1];
        let fwd = model.forward_train(images.view(), &labels, None).unwrap();
        assert_eq!(fwd.output.f_main.dim(), (4, 64));
        assert_eq!(fwd.output.f_aux.dim(), (4, 64));
        assert_eq!(fwd.output.p_fused.len(), 4);
        assert_eq!(fwd.output.labels, labels);
        assert_eq!(fwd.output.main.len(), 4);
        assert_eq!(fwd.output.weights.len(), 4);
    }

    #[test]
    fn branches_share_no_parameters() {
        let model = DualBranchModel::new(&tiny_cfg(), 3).unwrap();
        let main: std::collections::HashSet<_> = model.main.param_ids().into_iter().collect();
        let aux: std::collections::HashSet<_> = model.aux.param_ids().into_iter().collect();
        assert!(main.is_disjoint(&aux));
        // All three heads map dim features to one logit per class.
        for head in [&model.head_main, &model.head_aux, &model.head_fused] {
            assert_eq!(model.store.value(head.weight).shape(), [16, NUM_CLASSES]);
            assert_eq!(model.store.value(head.bias).shape(), [NUM_CLASSES]);
        }
    }

    #[test]
    fn identical_branches_agree_and_correlate_fully() {
        let mut model = DualBranchModel::new(&tiny_cfg(), 11).unwrap();
        model.copy_main_into_aux();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let images = random_images(&mut rng, 3, 8);
        let labels = [1u8, 0, 1];
        let mut fwd = model.forward_train(images.view(), &labels, None).unwrap();
        assert_eq!(fwd.output.f_main, fwd.output.f_aux);
        for w in &fwd.output.weights {
            assert!((w.main - 0.5).abs() < TOL);
        }
        let graph = model.compute_losses(&mut fwd, &schedule(), 0).unwrap();
        // Identical features correlate perfectly; the denominator guard
        // keeps the penalty a hair under 1.
        assert!((graph.values.dec - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fusion_weights_match_the_scalar_rule() {
        let model = DualBranchModel::new(&tiny_cfg(), 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let images = random_images(&mut rng, 6, 8);
        let labels = [0u8, 1, 1, 0, 1, 0];
        let fwd = model.forward_train(images.view(), &labels, None).unwrap();
        for (i, w) in fwd.output.weights.iter().enumerate() {
            assert!((w.main + w.aux - 1.0).abs() < TOL);
            let expected = crate::fusion::fusion_weights(
                fwd.output.main[i].uncertainty,
                fwd.output.aux[i].uncertainty,
            )
            .unwrap();
            assert!((w.main - expected.main).abs() < TOL);
        }
    }

    #[test]
    fn graph_losses_match_scalar_references() {
        let model = DualBranchModel::new(&tiny_cfg(), 17).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let images = random_images(&mut rng, 5, 8);
        let labels = [0u8, 1, 1, 0, 1];
        let mut fwd = model.forward_train(images.view(), &labels, None).unwrap();
        let sched = schedule();
        let epoch = 2;
        let graph = model.compute_losses(&mut fwd, &sched, epoch).unwrap();
        let lambda = sched.factor(epoch).unwrap();

        for (nodes, summaries, got) in [
            (&fwd.main, &fwd.output.main, graph.values.edu_main),
            (&fwd.aux, &fwd.output.aux, graph.values.edu_aux),
        ] {
            let ev = fwd
                .tape
                .value(nodes.evidence)
                .view()
                .into_dimensionality::<Ix2>()
                .unwrap();
            let mut edl = 0.0;
            let mut euc_batch = Vec::new();
            for (i, s) in summaries.iter().enumerate() {
                let evidence =
                    crate::evidential::EvidenceVector::new(vec![ev[[i, 0]], ev[[i, 1]]]).unwrap();
                edl += edl_loss(&evidence, labels[i] as usize).unwrap();
                euc_batch.push(EucSample {
                    max_belief: s.max_belief,
                    uncertainty: s.uncertainty,
                    predicted_class: s.predicted_class,
                    label: labels[i] as usize,
                });
            }
            let euc = euc_loss(&euc_batch, lambda).unwrap();
            assert!((got - (edl + euc.value)).abs() < 1e-9);
        }

        let ce: f64 = fwd
            .output
            .p_fused
            .iter()
            .zip(&labels)
            .map(|(&p, &y)| binary_cross_entropy(p, y == 1).unwrap())
            .sum::<f64>()
            / labels.len() as f64;
        assert!((graph.values.ce_fused - ce).abs() < TOL);

        let dec: f64 = (0..labels.len())
            .map(|i| {
                decorrelation_loss(
                    fwd.output.f_main.row(i).as_slice().unwrap(),
                    fwd.output.f_aux.row(i).as_slice().unwrap(),
                    DecorrelationMode::Signed,
                )
                .unwrap()
            })
            .sum::<f64>()
            / labels.len() as f64;
        assert!((graph.values.dec - dec).abs() < 1e-9);

        let v = &graph.values;
        assert!((v.total - (v.edu_main + v.edu_aux + v.ce_fused + v.dec)).abs() < TOL);
        assert!((fwd.tape.scalar(graph.total) - v.total).abs() < TOL);
    }

    #[test]
    fn zero_evidence_heads_hit_the_analytic_loss() {
        let mut cfg = tiny_cfg();
        cfg.activation = Activation::Relu;
        let mut model = DualBranchModel::new(&cfg, 23).unwrap();
        for name in ["main.head.", "aux.head."] {
            for part in ["weight", "bias"] {
                let id = model.store.id(&format!("{name}{part}")).unwrap();
                model.store.value_mut(id).fill(0.0);
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let images = random_images(&mut rng, 4, 8);
        let labels = [0u8, 0, 1, 1];
        let mut fwd = model.forward_train(images.view(), &labels, None).unwrap();
        let sched = schedule();
        let graph = model.compute_losses(&mut fwd, &sched, 0).unwrap();
        // Zero evidence: every sample contributes ln 2 to the likelihood
        // term and predicts class 0 (tie). The two correctly-predicted real
        // samples pay the calibration floor -lambda · 0.5 · ln(eps); the two
        // wrong ones pay -(1-lambda) · 0.5 · ln(1) = 0.
        let lambda = sched.factor(0).unwrap();
        let expected =
            4.0 * std::f64::consts::LN_2 + 2.0 * lambda * 0.5 * -(LOG_EPS.ln());
        assert!((graph.values.edu_main - expected).abs() < TOL);
        assert!((graph.values.edu_aux - expected).abs() < TOL);
        for s in &fwd.output.main {
            assert!((s.uncertainty - 1.0).abs() < TOL);
            assert!((s.max_belief - 0.5).abs() < TOL);
            assert_eq!(s.predicted_class, 0);
        }
    }

    #[test]
    fn decorrelation_gradient_skips_the_frozen_branch() {
        for (stop, frozen, trained) in [
            (StopSide::Main, "main.backbone.", "aux.backbone."),
            (StopSide::Aux, "aux.backbone.", "main.backbone."),
        ] {
            let mut cfg = tiny_cfg();
            cfg.stop_side = stop;
            let model = DualBranchModel::new(&cfg, 31).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            for _ in 0..3 {
                let images = random_images(&mut rng, 4, 8);
                let labels = [0u8, 1, 0, 1];
                let mut fwd = model.forward_train(images.view(), &labels, None).unwrap();
                let graph = model.compute_losses(&mut fwd, &schedule(), 0).unwrap();
                let grads = model.gradients(&fwd, graph.dec.unwrap());
                let mut trained_max = 0.0f64;
                for (id, name, _) in model.store.iter() {
                    let magnitude = grads[id]
                        .as_ref()
                        .map_or(0.0, |g| g.iter().fold(0.0f64, |m, &v| m.max(v.abs())));
                    if name.starts_with(frozen) {
                        assert!(
                            magnitude < 1e-8,
                            "{name} received decorrelation gradient {magnitude}"
                        );
                    } else if name.starts_with(trained) {
                        trained_max = trained_max.max(magnitude);
                    }
                }
                assert!(
                    trained_max > 1e-4,
                    "no decorrelation gradient reached the trained branch (max {trained_max})"
                );
            }
        }
    }

    #[test]
    fn decorrelation_can_be_disabled() {
        let mut cfg = tiny_cfg();
        cfg.use_decorrelation = false;
        let model = DualBranchModel::new(&cfg, 13).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let images = random_images(&mut rng, 3, 8);
        let mut fwd = model.forward_train(images.view(), &[0, 1, 0], None).unwrap();
        let graph = model.compute_losses(&mut fwd, &schedule(), 0).unwrap();
        assert!(graph.dec.is_none());
        assert_eq!(graph.values.dec, 0.0);
        let v = &graph.values;
        assert!((v.total - (v.edu_main + v.edu_aux + v.ce_fused)).abs() < TOL);
    }

    #[test]
    fn inference_uses_the_main_branch_only() {
        let mut model = DualBranchModel::new(&tiny_cfg(), 37).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let images = random_images(&mut rng, 4, 8);
        let before = model.forward_inference(images.view()).unwrap();
        for s in &before {
            assert!(s.p > 0.0 && s.p < 1.0);
            assert!(s.u > 0.0 && s.u <= 1.0);
        }
        let mut wreck_rng = ChaCha20Rng::seed_from_u64(999);
        scramble_params(&mut model.store, &mut wreck_rng, |name| {
            name.starts_with("aux.")
        });
        let after = model.forward_inference(images.view()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_evidence_inference_is_maximally_uncertain() {
        let mut cfg = tiny_cfg();
        cfg.activation = Activation::Relu;
        let mut model = DualBranchModel::new(&cfg, 41).unwrap();
        for part in ["weight", "bias"] {
            let id = model.store.id(&format!("main.head.{part}")).unwrap();
            model.store.value_mut(id).fill(0.0);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let images = random_images(&mut rng, 2, 8);
        for s in model.forward_inference(images.view()).unwrap() {
            assert!((s.p - 0.5).abs() < TOL);
            assert!((s.u - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn label_validation() {
        let model = DualBranchModel::new(&tiny_cfg(), 43).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let images = random_images(&mut rng, 2, 8);
        assert!(model.forward_train(images.view(), &[0], None).is_err());
        assert!(model.forward_train(images.view(), &[0, 2], None).is_err());
    }

    #[test]
    fn config_serialization_round_trip() {
        let cfg = ModelConfig {
            stop_side: StopSide::Aux,
            decorrelation_mode: DecorrelationMode::Absolute,
            activation: Activation::Softplus,
            use_decorrelation: false,
            ..ModelConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert!(text.contains("stop_side = \"aux\""));
        assert!(text.contains("activation = \"softplus\""));
        let back: ModelConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let defaults: ModelConfig = toml::from_str("").unwrap();
        assert!(defaults.use_decorrelation);
        assert_eq!(defaults.stop_side, StopSide::Main);
        assert!(toml::from_str::<ModelConfig>("unknown_key = 1").is_err());
    }

    #[test]
    fn heatmaps_cover_the_patch_grid() {
        let model = DualBranchModel::new(&tiny_cfg(), 47).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let images = random_images(&mut rng, 2, 8);
        let maps = model.rollout_heatmaps(images.view()).unwrap();
        assert_eq!(maps.len(), 2);
        for m in maps {
            assert_eq!(m.heatmap.dim(), (2, 2));
            assert!((m.heatmap.sum() - 1.0).abs() < 1e-9);
            // 5 tokens: class + 4 patches; rollout rows are distributions.
            assert_eq!(m.matrix.dim(), (5, 5));
            for row in m.matrix.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
        }
    }
}
