//! Named parameter store with matching gradient slots and a deterministic
//! iteration order (insertion order).

use super::{Scalar, Tensor};

/// Index into a [`ParamStore`]; stable for the life of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct ParamEntry<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    /// Frozen parameters receive no gradient and are skipped by Adam.
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct ParamStore<S> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor<S>) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry { name: name.to_string(), value, grad, frozen: false });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].grad
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry<S> {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut ParamEntry<S> {
        &mut self.entries[idx]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<S>> {
        self.entries.iter()
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    /// Accumulate `g` into the gradient slot unless the parameter is frozen.
    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<S>) {
        let e = &mut self.entries[id.0];
        if !e.frozen {
            e.grad.add_assign(g);
        }
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.iter_mut() {
            e.grad.fill(S::ZERO);
        }
    }

    pub fn scale_grads(&mut self, s: S) {
        for e in self.entries.iter_mut() {
            e.grad.scale(s);
        }
    }

    /// Global L2 norm of all gradients, accumulated in `f64`.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for e in &self.entries {
            for v in e.grad.iter() {
                let x = v.to_f64();
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn total_param_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Add the gradients of `other` into this store, entry by entry.
    /// Both stores must have the same layout (same construction order).
    pub fn merge_grads(&mut self, other: &ParamStore<S>) {
        assert_eq!(self.entries.len(), other.entries.len());
        for (e, o) in self.entries.iter_mut().zip(other.entries.iter()) {
            debug_assert_eq!(e.name, o.name);
            if !e.frozen {
                e.grad.add_assign(&o.grad);
            }
        }
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Standalone gradient accumulator with the same layout as a store.
/// Workers accumulate into private buffers; buffers are then merged into
/// the store in a fixed order so parallel reductions stay deterministic.
#[derive(Debug, Clone)]
pub struct GradBuffer<S> {
    grads: Vec<Tensor<S>>,
}

impl<S: Scalar> GradBuffer<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Self {
        GradBuffer { grads: store.iter().map(|e| Tensor::zeros(e.value.shape())).collect() }
    }

    pub fn zero(&mut self) {
        for g in self.grads.iter_mut() {
            g.fill(S::ZERO);
        }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<S>) {
        self.grads[id.0].add_assign(g);
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    /// Add this buffer into the store's gradient slots, skipping frozen
    /// parameters, optionally scaling by `scale` (e.g. 1/minibatch).
    pub fn merge_into(&self, store: &mut ParamStore<S>, scale: S) {
        assert_eq!(self.grads.len(), store.len());
        for (idx, g) in self.grads.iter().enumerate() {
            let e = store.entry_mut(idx);
            if e.frozen {
                continue;
            }
            for (dst, src) in e.grad.data_mut().iter_mut().zip(g.data().iter()) {
                *dst += *src * scale;
            }
        }
    }
}

/// Snapshot/restore of all parameter values as one flat vector; used by
/// finite-difference gradient checks.
impl<S: Scalar> ParamStore<S> {
    pub fn snapshot(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.total_param_count());
        for e in &self.entries {
            out.extend_from_slice(e.value.data());
        }
        out
    }

    pub fn restore(&mut self, flat: &[S]) {
        let mut at = 0;
        for e in self.entries.iter_mut() {
            let n = e.value.len();
            e.value.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        assert_eq!(at, flat.len());
    }

    pub fn grad_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.total_param_count());
        for e in &self.entries {
            out.extend_from_slice(e.grad.data());
        }
        out
    }
}
