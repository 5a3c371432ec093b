//! Attention rollout: layer-wise saliency from recorded attention maps.
//!
//! Per layer, heads are averaged, half an identity is mixed in for the
//! residual path, rows are renormalized, and the per-layer matrices are
//! multiplied in order. The class-token row of the product says how much
//! each input patch fed the final feature.

use ndarray::{Array2, Array3, Array4, s};

use crate::error::{Error, Result};

/// Per-layer attention probabilities for one image, each layer shaped
/// (heads, tokens, tokens) with rows summing to 1.
pub struct AttentionStack {
    layers: Vec<Array3<f64>>,
}

/// Row-sum tolerance accepted when validating attention inputs.
pub const ROW_SUM_TOL: f64 = 1e-5;

impl AttentionStack {
    pub fn new(layers: Vec<Array3<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("empty attention stack".into()));
        }
        let (h0, t0, t1) = layers[0].dim();
        if t0 != t1 {
            return Err(Error::InvalidInput(format!(
                "attention must be square, got {t0}×{t1}"
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.dim() != (h0, t0, t0) {
                return Err(Error::InvalidInput(format!(
                    "layer {i} shape {:?} differs from layer 0",
                    layer.dim()
                )));
            }
            for h in 0..h0 {
                for r in 0..t0 {
                    let row = layer.slice(s![h, r, ..]);
                    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "layer {i} head {h} row {r} has invalid entries"
                        )));
                    }
                    if (row.sum() - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::InvalidInput(format!(
                            "layer {i} head {h} row {r} sums to {}",
                            row.sum()
                        )));
                    }
                }
            }
        }
        Ok(Self { layers })
    }

    /// Extract the stack of one batch element from per-layer
    /// (batch, heads, tokens, tokens) recordings.
    pub fn from_batch(layers: &[Array4<f64>], index: usize) -> Result<Self> {
        let per_image: Vec<Array3<f64>> = layers
            .iter()
            .map(|l| l.slice(s![index, .., .., ..]).to_owned())
            .collect();
        Self::new(per_image)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn tokens(&self) -> usize {
        self.layers[0].dim().1
    }
}

/// Multiply the residual-corrected, head-averaged layer matrices in order;
/// the result is row-stochastic.
pub fn attention_rollout(stack: &AttentionStack) -> Result<Array2<f64>> {
    let t = stack.tokens();
    let mut rollout = Array2::<f64>::eye(t);
    for layer in &stack.layers {
        let heads = layer.dim().0 as f64;
        let mut mixed = layer.sum_axis(ndarray::Axis(0)) / heads;
        // Half attention, half identity for the residual path, rows
        // renormalized to stay stochastic.
        mixed *= 0.5;
        for i in 0..t {
            mixed[[i, i]] += 0.5;
        }
        for mut row in mixed.rows_mut() {
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        rollout = mixed.dot(&rollout);
    }
    Ok(rollout)
}

/// Class-token saliency over the patch grid: row 0 of the rollout without
/// the class-token column, reshaped to (grid, grid) and renormalized to
/// sum to 1.
pub fn class_token_heatmap(rollout: &Array2<f64>, grid: usize) -> Result<Array2<f64>> {
    let t = rollout.nrows();
    if t != grid * grid + 1 {
        return Err(Error::InvalidInput(format!(
            "rollout has {t} tokens, expected {}",
            grid * grid + 1
        )));
    }
    let row = rollout.slice(s![0, 1..]);
    let total = row.sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "class token attends only to itself".into(),
        ));
    }
    let mut map = Array2::<f64>::zeros((grid, grid));
    for (i, v) in row.iter().enumerate() {
        map[[i / grid, i % grid]] = v / total;
    }
    Ok(map)
}
