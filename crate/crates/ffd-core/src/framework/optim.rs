//! Adaptive-moment optimizer and the cosine learning-rate schedule.

use ndarray::ArrayD;

use crate::backbone::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, aligned with the parameter store by
/// id, plus the shared step counter.
pub struct AdamState {
    pub step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let m = store
            .iter()
            .map(|(_, _, v)| ArrayD::zeros(v.raw_dim()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self { step: 0, m, v }
    }

    /// One update over every parameter. Parameters without a gradient this
    /// step are treated as having a zero gradient (their momentum decays).
    pub fn apply(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<ArrayD<f64>>],
        learning_rate: f64,
    ) {
        assert_eq!(grads.len(), store.len());
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for id in 0..store.len() {
            let zero;
            let g = match &grads[id] {
                Some(g) => g,
                None => {
                    zero = ArrayD::zeros(store.value(id).raw_dim());
                    &zero
                }
            };
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            m.zip_mut_with(g, |mi, &gi| *mi = BETA1 * *mi + (1.0 - BETA1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi);
            let param = store.value_mut(id);
            ndarray::azip!((p in param, mi in &*m, vi in &*v) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *p -= learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
            });
        }
    }

    /// Moment tensors for checkpointing, in parameter-id order.
    pub fn moments(&self) -> (&[ArrayD<f64>], &[ArrayD<f64>]) {
        (&self.m, &self.v)
    }

    /// Restore moments saved by [`AdamState::moments`].
    pub fn restore(&mut self, step: u64, m: Vec<ArrayD<f64>>, v: Vec<ArrayD<f64>>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.step = step;
        self.m = m;
        self.v = v;
    }
}

/// Cosine decay from `base` at epoch 0 toward 0 at epoch `total`.
pub fn cosine_lr(base: f64, epoch: u32, total: u32) -> f64 {
    let frac = f64::from(epoch) / f64::from(total.max(1));
    base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}
