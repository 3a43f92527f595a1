//! Categorical distribution over action logits.

use rand::Rng;

/// Softmax distribution with cached probabilities and log-probabilities,
/// computed in `f64` regardless of the network's training precision.
#[derive(Debug, Clone)]
pub struct Categorical {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        assert!(!logits.is_empty());
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let log_z = z.ln();
        let probs = exps.iter().map(|e| e / z).collect();
        let log_probs = logits.iter().map(|&l| l - m - log_z).collect();
        Categorical { probs, log_probs }
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF sample from a single uniform draw; deterministic for a
    /// fixed rng state.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy `-sum p ln p` in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(self.log_probs.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lp)| p * lp)
            .sum::<f64>()
    }
}
