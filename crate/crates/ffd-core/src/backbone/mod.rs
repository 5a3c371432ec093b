//! Vision-transformer encoder, attention-rollout saliency, parameter
//! storage, and checkpoint archives.

pub mod checkpoint;
pub mod params;
pub mod rollout;
pub mod vit;

pub use checkpoint::{
    apply_to_store, load, save, Checkpoint, CheckpointMeta, LoadReport, Normalization, Strictness,
    MODEL_NS, OPTIM_NS,
};
pub use params::{ParamId, ParamStore, TapeBinding};
pub(crate) use vit::trunc_normal;
pub use rollout::{attention_rollout, class_token_heatmap, AttentionStack};
pub use vit::{patchify, EncoderOutput, ViT, ViTConfig};
