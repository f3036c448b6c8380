//! Adam optimizer with two parameter groups: model weights and the
//! autocorrelation coefficient, each with its own learning rate.

use crate::autodiff::{ParamGroup, ParamStore, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter first/second moment state.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let m = store
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every parameter in the store,
    /// reading the accumulated grads. Does not zero grads.
    pub fn step(&mut self, store: &mut ParamStore, lr_model: f64, lr_rho: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for idx in 0..store.len() {
            let lr = match store.get(idx).group {
                ParamGroup::Model => lr_model,
                ParamGroup::Rho => lr_rho,
            };
            let param = store.get_mut(idx);
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let grad = param.grad.data().to_vec();
            for ((w, g), (mi, vi)) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}
