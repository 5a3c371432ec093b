//! A small vision transformer over grayscale images.
//!
//! Images are cut into non-overlapping patches, linearly embedded, prefixed
//! with a learned class token, offset by a learned positional table, and run
//! through pre-norm transformer blocks. The final layer norm's class token
//! is the image feature. Attention probabilities can be recorded per layer
//! for saliency rollout.

use ndarray::{Array2, Array4, ArrayD, ArrayView3, IxDyn, s};
use rand::RngExt;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape};

use super::params::{ParamId, ParamStore, TapeBinding};

/// Architecture hyperparameters. The default is the desk-scale setup:
/// 32×32 inputs, 4-pixel patches, width 64, two blocks of four heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViTConfig {
    /// Input edge length in pixels (images are square, single-channel).
    pub image_size: usize,
    /// Patch edge length in pixels.
    pub patch_size: usize,
    /// Embedding width, also the feature length.
    pub embed_dim: usize,
    /// Number of transformer blocks.
    pub depth: usize,
    /// Attention heads per block.
    pub heads: usize,
    /// MLP hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: f64,
    /// Dropout probability applied after the positional table, the attention
    /// projection, and the MLP output (training mode only).
    pub drop_rate: f64,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 4,
            embed_dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4.0,
            drop_rate: 0.0,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.patch_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if self.depth == 0 || self.heads == 0 {
            return Err(Error::Config("depth and heads must be positive".into()));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(Error::Config("mlp_ratio must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::Config("drop_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Patches per image edge.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patches per image.
    pub fn patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Sequence length including the class token.
    pub fn tokens(&self) -> usize {
        self.patches() + 1
    }

    /// Flattened pixels per patch.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// MLP hidden width.
    pub fn mlp_dim(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }
}

/// Layer-norm epsilon used throughout the encoder.
pub const LN_EPS: f64 = 1e-6;

struct BlockParams {
    ln1_gain: ParamId,
    ln1_shift: ParamId,
    qkv_weight: ParamId,
    qkv_bias: ParamId,
    proj_weight: ParamId,
    proj_bias: ParamId,
    ln2_gain: ParamId,
    ln2_shift: ParamId,
    fc1_weight: ParamId,
    fc1_bias: ParamId,
    fc2_weight: ParamId,
    fc2_bias: ParamId,
}

/// One encoder; its parameters live in a shared [`ParamStore`] under the
/// prefix given at construction.
pub struct ViT {
    cfg: ViTConfig,
    patch_weight: ParamId,
    patch_bias: ParamId,
    class_token: ParamId,
    pos_table: ParamId,
    blocks: Vec<BlockParams>,
    ln_f_gain: ParamId,
    ln_f_shift: ParamId,
}

/// Result of one encoder forward pass.
pub struct EncoderOutput {
    /// Class-token features, shape (batch, embed_dim), as a tape node.
    pub features: NodeId,
    /// When requested: per-layer attention probabilities, each
    /// (batch, heads, tokens, tokens).
    pub attention: Option<Vec<Array4<f64>>>,
}

impl ViT {
    /// Register freshly initialized parameters under `prefix` (which should
    /// end in a separator, e.g. `"main.backbone."`).
    pub fn init(
        cfg: &ViTConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.embed_dim;
        let mut tn = |store: &mut ParamStore, name: String, shape: &[usize]| -> ParamId {
            store.register(name, trunc_normal(rng, shape, 0.02))
        };
        let patch_weight = tn(store, format!("{prefix}patch_embed.weight"), &[cfg.patch_dim(), c]);
        let patch_bias = store.register(format!("{prefix}patch_embed.bias"), zeros(&[c]));
        let class_token = tn(store, format!("{prefix}class_token"), &[c]);
        let pos_table = tn(store, format!("{prefix}pos_table"), &[cfg.tokens(), c]);
        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let p = format!("{prefix}block{i}.");
            blocks.push(BlockParams {
                ln1_gain: store.register(format!("{p}ln1.gain"), ones(&[c])),
                ln1_shift: store.register(format!("{p}ln1.shift"), zeros(&[c])),
                qkv_weight: tn(store, format!("{p}attn.qkv.weight"), &[c, 3 * c]),
                qkv_bias: store.register(format!("{p}attn.qkv.bias"), zeros(&[3 * c])),
                proj_weight: tn(store, format!("{p}attn.proj.weight"), &[c, c]),
                proj_bias: store.register(format!("{p}attn.proj.bias"), zeros(&[c])),
                ln2_gain: store.register(format!("{p}ln2.gain"), ones(&[c])),
                ln2_shift: store.register(format!("{p}ln2.shift"), zeros(&[c])),
                fc1_weight: tn(store, format!("{p}mlp.fc1.weight"), &[c, cfg.mlp_dim()]),
                fc1_bias: store.register(format!("{p}mlp.fc1.bias"), zeros(&[cfg.mlp_dim()])),
                fc2_weight: tn(store, format!("{p}mlp.fc2.weight"), &[cfg.mlp_dim(), c]),
                fc2_bias: store.register(format!("{p}mlp.fc2.bias"), zeros(&[c])),
            });
        }
        let ln_f_gain = store.register(format!("{prefix}ln_f.gain"), ones(&[c]));
        let ln_f_shift = store.register(format!("{prefix}ln_f.shift"), zeros(&[c]));
        Ok(Self {
            cfg: cfg.clone(),
            patch_weight,
            patch_bias,
            class_token,
            pos_table,
            blocks,
            ln_f_gain,
            ln_f_shift,
        })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.cfg
    }

    /// Encode a batch of normalized images. `train_rng` enables dropout;
    /// `record_attention` collects per-layer attention probabilities.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        binding: &mut TapeBinding,
        images: ArrayView3<'_, f64>,
        mut train_rng: Option<&mut ChaCha20Rng>,
        record_attention: bool,
    ) -> Result<EncoderOutput> {
        let (b, h, w) = images.dim();
        if b == 0 {
            return Err(Error::InvalidInput("empty image batch".into()));
        }
        if h != self.cfg.image_size || w != self.cfg.image_size {
            return Err(Error::InvalidInput(format!(
                "image batch is {h}×{w}, expected {0}×{0}",
                self.cfg.image_size
            )));
        }
        if images.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel values".into()));
        }

        let c = self.cfg.embed_dim;
        let tokens = self.cfg.tokens();
        let patches = patchify(images, self.cfg.patch_size);
        let patches = tape.leaf(patches.into_dyn());

        let mut bind = |tape: &mut Tape, id: ParamId| binding.bind(tape, store, id);

        // Patch embedding, class token, positions.
        let pw = bind(tape, self.patch_weight);
        let pb = bind(tape, self.patch_bias);
        let embedded = tape.linear(patches, pw, pb);
        let embedded = tape.reshape(embedded, &[b, self.cfg.patches(), c]);
        let cls = bind(tape, self.class_token);
        let seq = tape.prepend_token(cls, embedded);
        let pos = bind(tape, self.pos_table);
        let seq = tape.add_bcast(seq, pos);
        let mut x = self.dropout(tape, seq, &mut train_rng);
        x = tape.reshape(x, &[b * tokens, c]);

        let mut recorded = record_attention.then(Vec::new);
        for blk in &self.blocks {
            // Attention sublayer (pre-norm, residual).
            let g1 = bind(tape, blk.ln1_gain);
            let s1 = bind(tape, blk.ln1_shift);
            let normed = tape.layer_norm(x, g1, s1, LN_EPS);
            let qw = bind(tape, blk.qkv_weight);
            let qb = bind(tape, blk.qkv_bias);
            let qkv = tape.linear(normed, qw, qb);
            let qkv = tape.reshape(qkv, &[b, tokens, 3 * c]);
            let (attended, probs) = tape.mha(qkv, self.cfg.heads);
            if let Some(layers) = recorded.as_mut() {
                layers.push(probs);
            }
            let attended = tape.reshape(attended, &[b * tokens, c]);
            let ow = bind(tape, blk.proj_weight);
            let ob = bind(tape, blk.proj_bias);
            let projected = tape.linear(attended, ow, ob);
            let projected = self.dropout(tape, projected, &mut train_rng);
            x = tape.add(x, projected);

            // MLP sublayer (pre-norm, residual).
            let g2 = bind(tape, blk.ln2_gain);
            let s2 = bind(tape, blk.ln2_shift);
            let normed = tape.layer_norm(x, g2, s2, LN_EPS);
            let w1 = bind(tape, blk.fc1_weight);
            let b1 = bind(tape, blk.fc1_bias);
            let hidden = tape.linear(normed, w1, b1);
            let hidden = tape.gelu(hidden);
            let w2 = bind(tape, blk.fc2_weight);
            let b2 = bind(tape, blk.fc2_bias);
            let mlp_out = tape.linear(hidden, w2, b2);
            let mlp_out = self.dropout(tape, mlp_out, &mut train_rng);
            x = tape.add(x, mlp_out);
        }

        let gf = bind(tape, self.ln_f_gain);
        let sf = bind(tape, self.ln_f_shift);
        let x = tape.layer_norm(x, gf, sf, LN_EPS);
        let x = tape.reshape(x, &[b, tokens, c]);
        let features = tape.first_token(x);
        Ok(EncoderOutput {
            features,
            attention: recorded,
        })
    }

    /// Inverted dropout when training with a positive rate; identity
    /// otherwise.
    fn dropout(
        &self,
        tape: &mut Tape,
        x: NodeId,
        train_rng: &mut Option<&mut ChaCha20Rng>,
    ) -> NodeId {
        let rate = self.cfg.drop_rate;
        match train_rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask = ArrayD::from_shape_fn(tape.value(x).raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                tape.mul_const(x, mask)
            }
            _ => x,
        }
    }

    /// Names of all parameters of this encoder, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![
            self.patch_weight,
            self.patch_bias,
            self.class_token,
            self.pos_table,
        ];
        for blk in &self.blocks {
            ids.extend([
                blk.ln1_gain,
                blk.ln1_shift,
                blk.qkv_weight,
                blk.qkv_bias,
                blk.proj_weight,
                blk.proj_bias,
                blk.ln2_gain,
                blk.ln2_shift,
                blk.fc1_weight,
                blk.fc1_bias,
                blk.fc2_weight,
                blk.fc2_bias,
            ]);
        }
        ids.extend([self.ln_f_gain, self.ln_f_shift]);
        ids
    }
}

/// Cut a batch of (batch, size, size) images into flattened non-overlapping
/// patches, row-major over the patch grid: (batch·patches, patch_dim).
pub fn patchify(images: ArrayView3<'_, f64>, patch: usize) -> Array2<f64> {
    let (b, h, w) = images.dim();
    let grid_h = h / patch;
    let grid_w = w / patch;
    let mut out = Array2::<f64>::zeros((b * grid_h * grid_w, patch * patch));
    for bi in 0..b {
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                let row = bi * grid_h * grid_w + gy * grid_w + gx;
                let block = images.slice(s![bi, gy * patch..(gy + 1) * patch, gx * patch..(gx + 1) * patch]);
                for (i, v) in block.iter().enumerate() {
                    out[[row, i]] = *v;
                }
            }
        }
    }
    out
}

fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

fn ones(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::ones(IxDyn(shape))
}

/// Normal(0, std²) truncated at ±2 std, the usual transformer init.
pub(crate) fn trunc_normal(rng: &mut ChaCha20Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    use rand_distr::{Distribution, Normal};
    let dist = Normal::new(0.0, std).expect("valid normal");
    ArrayD::from_shape_fn(IxDyn(shape), |_| loop {
        let x: f64 = dist.sample(rng);
        if x.abs() <= 2.0 * std {
            break x;
        }
    })
}
