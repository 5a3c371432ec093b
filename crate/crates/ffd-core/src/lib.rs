//! Face-forgery detection with a dual-branch evidential pipeline.
//!
//! Two vision-transformer branches score each image: a main branch and an
//! auxiliary branch trained to encode complementary evidence via a
//! decorrelation penalty. Each branch emits Dirichlet evidence — a fake
//! probability `p` plus an explicit uncertainty `u` — and the branch features
//! are fused with uncertainty-derived weights before a final binary head.
//! Downstream, decision thresholds are tuned on validation scores, either on
//! raw `p` or on uncertainty-adjusted `p / u` scores.
//!
//! The crate is organized bottom-up:
//!
//! * [`evidential`], [`losses`], [`fusion`] — the scalar math,
//! * [`tensor`] — a small reverse-mode autodiff engine on `f64` arrays,
//! * [`backbone`] — the vision transformer, attention rollout, checkpoints,
//! * [`framework`] — the dual-branch model, its losses, and the trainer,
//! * [`threshold`], [`metrics`] — decision-threshold search and evaluation,
//! * [`datasets`], [`config`], [`render`], [`cli`] — the surrounding tooling.

pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evidential;
pub mod fusion;
pub mod losses;
pub mod metrics;
pub mod render;
pub mod tensor;
pub mod threshold;

pub mod backbone;
pub mod framework;

pub use error::{Error, Result};
