//! Adam with bias correction, plus global gradient-norm clipping.

use super::{ParamStore, Scalar, Tensor};

/// Per-parameter first/second moments and the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>) -> Self {
        let m = store.iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        let v = store.iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        AdamState { m, v, t: 0 }
    }
}

/// One bias-corrected Adam update in place. Frozen parameters are left
/// untouched (values and moments).
pub fn adam_step<S: Scalar>(
    store: &mut ParamStore<S>,
    state: &mut AdamState<S>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    adam_eps: f64,
) {
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::from_f64(beta1);
    let b2 = S::from_f64(beta2);
    let one_m_b1 = S::from_f64(1.0 - beta1);
    let one_m_b2 = S::from_f64(1.0 - beta2);
    let bc1 = S::from_f64(1.0 / (1.0 - beta1.powi(t)));
    let bc2 = S::from_f64(1.0 / (1.0 - beta2.powi(t)));
    let lr_s = S::from_f64(lr);
    let eps = S::from_f64(adam_eps);

    for idx in 0..store.len() {
        if store.entry(idx).frozen {
            continue;
        }
        let entry = store.entry_mut(idx);
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let g = entry.grad.data();
        let p = entry.value.data_mut();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + one_m_b1 * g[i];
            v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
            let m_hat = m[i] * bc1;
            let v_hat = v[i] * bc2;
            p[i] -= lr_s * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Scale all gradients so the global L2 norm is at most `max_norm`.
/// Returns the applied scale (1.0 when untouched).
pub fn clip_grad_norm<S: Scalar>(store: &mut ParamStore<S>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        store.scale_grads(S::from_f64(scale));
        scale
    } else {
        1.0
    }
}
