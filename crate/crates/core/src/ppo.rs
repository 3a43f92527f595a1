//! PPO machinery: rollout collection over parallel environments, GAE, and
//! the composite update (clipped surrogate + value regression + annealed
//! entropy + auxiliary BCE supervision of the step/termination heads).
//!
//! Determinism contract: every worker owns a ChaCha stream derived from
//! `(seed, update index, env index)`, transitions merge env-major, and
//! minibatch gradients accumulate over a fixed number of chunks merged in
//! chunk order, so results are independent of thread scheduling.

use crate::agent::{obs_to_tensor, select_action, Agent, ForwardCache, HeadGrads, SelectMode};
use crate::env::{DoneReason, Granularity, RegEnv};
use crate::nn::{adam_step, clip_grad_norm, sigmoid, AdamState, GradBuffer, NnError, Scalar, Tensor};
use crate::obs::Observation;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("non-finite loss at update {update}, epoch {epoch}, minibatch {minibatch}: {terms:?}")]
    NonFiniteLoss { update: usize, epoch: usize, minibatch: usize, terms: LossTerms },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Training hyperparameters. The defaults are the reference settings:
/// 4096-step rollouts, four epochs of minibatch 128, lr 1e-4, gamma 0.98,
/// GAE lambda 0.95, clip 0.3, grad clip 0.5, entropy 0.05 -> 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rollout_len: usize,
    pub epochs_per_update: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub max_grad_norm: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub lambda_v: f64,
    pub lambda_d: f64,
    pub total_updates: usize,
    pub n_envs: usize,
    pub seed: u64,
    /// Fraction of updates with the auxiliary heads disabled (no BCE loss
    /// and no sampled termination).
    pub aux_warmup_frac: f64,
    /// Success-threshold schedule; a single stage disables the curriculum.
    pub curriculum_stages: Vec<f64>,
    /// Fixed gradient-accumulation chunk count (determinism knob).
    pub grad_chunks: usize,
    /// Updates between periodic checkpoints (0 = final only).
    pub checkpoint_every: usize,
    pub pretrain_pairs: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rollout_len: 4096,
            epochs_per_update: 4,
            minibatch: 128,
            lr: 1e-4,
            gamma: 0.98,
            gae_lambda: 0.95,
            clip_eps: 0.3,
            max_grad_norm: 0.5,
            entropy_start: 0.05,
            entropy_end: 0.0,
            lambda_v: 0.5,
            lambda_d: 0.5,
            total_updates: 200,
            n_envs: 8,
            seed: 0,
            aux_warmup_frac: 0.25,
            curriculum_stages: crate::env::Curriculum::default().stages().to_vec(),
            grad_chunks: 4,
            checkpoint_every: 50,
            pretrain_pairs: 2048,
            pretrain_epochs: 20,
            pretrain_lr: 3e-4,
            pretrain_batch: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rollout_len == 0 || self.rollout_len % self.minibatch != 0 {
            return Err(format!("rollout_len {} must be a positive multiple of minibatch {}", self.rollout_len, self.minibatch));
        }
        if self.rollout_len % self.n_envs != 0 {
            return Err(format!("rollout_len {} must divide across n_envs {}", self.rollout_len, self.n_envs));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err("gae_lambda must lie in [0, 1]".into());
        }
        if self.grad_chunks == 0 || self.minibatch % self.grad_chunks != 0 {
            return Err(format!("minibatch {} must be a multiple of grad_chunks {}", self.minibatch, self.grad_chunks));
        }
        if self.curriculum_stages.is_empty() {
            return Err("curriculum needs at least one stage".into());
        }
        Ok(())
    }

    /// First update index with the auxiliary heads enabled.
    pub fn aux_enable_update(&self) -> usize {
        (self.aux_warmup_frac * self.total_updates as f64).ceil() as usize
    }
}

/// Linear entropy-coefficient annealing over the update schedule.
pub fn entropy_coef(update_idx: usize, total_updates: usize, start: f64, end: f64) -> f64 {
    if total_updates == 0 {
        return end;
    }
    let t = (update_idx as f64 / total_updates as f64).clamp(0.0, 1.0);
    start + (end - start) * t
}

/// One stored environment transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs_cur: Arc<Observation>,
    pub obs_tgt: Arc<Observation>,
    /// Encoder features at collection time; valid for the whole update
    /// only when the encoder is frozen.
    pub feat_cur: Arc<Tensor<f32>>,
    pub feat_tgt: Arc<Tensor<f32>>,
    pub action_index: usize,
    pub terminate: bool,
    pub coarse: bool,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub m: f64,
    /// Auxiliary labels for the state this transition's decision was made
    /// from (coarse-step label, termination label).
    pub step_label_coarse: bool,
    pub term_label: bool,
}

/// Episode-end record, merged env-major for deterministic curriculum
/// bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeEvent {
    pub env_idx: usize,
    pub reason: DoneReason,
    pub length: usize,
    pub final_m: f64,
    pub m0: f64,
}

#[derive(Debug, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// `(start, len, bootstrap_value)` per environment segment.
    pub segments: Vec<(usize, usize, f64)>,
    pub episode_events: Vec<EpisodeEvent>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// One environment plus its per-episode caches, owned by one worker.
pub struct EnvRunner {
    pub env: RegEnv,
    cur_tensor: Option<Tensor<f32>>,
    feat_cur: Option<Arc<Tensor<f32>>>,
    feat_tgt: Option<Arc<Tensor<f32>>>,
    /// Labels for the state the next decision will be made from.
    pending_labels: (Granularity, bool),
}

impl EnvRunner {
    pub fn new(env: RegEnv) -> Self {
        EnvRunner { env, cur_tensor: None, feat_cur: None, feat_tgt: None, pending_labels: (Granularity::Coarse, false) }
    }

    fn refresh_episode_caches(&mut self, agent: &Agent<f32>) -> Result<(), PpoError> {
        let state = self.env.state().expect("episode must be live");
        let tgt_tensor = obs_to_tensor::<f32>(&state.obs_tgt);
        self.feat_tgt = Some(Arc::new(agent.encode_features(&tgt_tensor)?));
        let cur_tensor = obs_to_tensor::<f32>(&state.obs_cur);
        self.feat_cur = Some(Arc::new(agent.encode_features(&cur_tensor)?));
        self.cur_tensor = Some(cur_tensor);
        self.pending_labels = crate::env::aux_labels(state.m_prev);
        Ok(())
    }
}

/// Collect `rollout_len / n_envs` transitions per environment in parallel.
/// Episodes carry over between calls; finished episodes reset in place.
/// When `allow_terminate` is false (auxiliary warm-up), sampled terminate
/// flags are masked off before stepping.
pub fn collect_rollout(
    runners: &mut [EnvRunner],
    agent: &Agent<f32>,
    cfg: &TrainConfig,
    update_idx: usize,
    allow_terminate: bool,
) -> Result<RolloutBuffer, PpoError> {
    let steps_per_env = cfg.rollout_len / runners.len();
    let n_envs = runners.len();

    struct WorkerOut {
        transitions: Vec<Transition>,
        bootstrap: f64,
        events: Vec<EpisodeEvent>,
    }

    let results: Vec<Result<WorkerOut, PpoError>> = runners
        .par_iter_mut()
        .enumerate()
        .map(|(env_idx, runner)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(crate::streams::collect(update_idx, env_idx));
            let space = runner.env.config().action_space();
            let mut transitions = Vec::with_capacity(steps_per_env);
            let mut events = Vec::new();

            // start or re-sync the live episode (parameters may have
            // changed since the last update, so features are recomputed)
            if runner.env.state().is_none_or(|s| s.done) {
                runner.env.reset(&mut rng)?;
            }
            runner.refresh_episode_caches(agent)?;

            for _ in 0..steps_per_env {
                let feat_cur = runner.feat_cur.clone().expect("episode caches ready");
                let feat_tgt = runner.feat_tgt.clone().expect("episode caches ready");
                let (out, _) = agent.policy_forward_features(&feat_cur, &feat_tgt)?;
                let mut cmd = select_action(&out, &space, SelectMode::Sample, &mut rng, 0.5);
                if !allow_terminate {
                    cmd.terminate = false;
                }
                let action_index = space.encode(&cmd);
                let dist = crate::nn::Categorical::from_logits(&out.logits_f64());
                let logp = dist.log_prob(action_index);
                let (state_obs_cur, state_obs_tgt) = {
                    let s = runner.env.state().unwrap();
                    (Arc::clone(&s.obs_cur), Arc::clone(&s.obs_tgt))
                };
                let labels = runner.pending_labels;

                let outcome = runner.env.step(&cmd)?;

                transitions.push(Transition {
                    obs_cur: state_obs_cur,
                    obs_tgt: state_obs_tgt,
                    feat_cur,
                    feat_tgt,
                    action_index,
                    terminate: cmd.terminate,
                    coarse: cmd.granularity == Granularity::Coarse,
                    logp,
                    value: out.value as f64,
                    reward: outcome.reward,
                    done: outcome.done,
                    m: outcome.m,
                    step_label_coarse: labels.0 == Granularity::Coarse,
                    term_label: labels.1,
                });

                if outcome.done {
                    let s = runner.env.state().unwrap();
                    events.push(EpisodeEvent {
                        env_idx,
                        reason: outcome.done_reason.expect("done implies reason"),
                        length: s.step_idx,
                        final_m: outcome.m,
                        m0: s.m0,
                    });
                    runner.env.reset(&mut rng)?;
                    runner.refresh_episode_caches(agent)?;
                } else if !outcome.undone && !cmd.terminate {
                    // the pose moved: refresh the current-frame caches
                    let cur_tensor = obs_to_tensor::<f32>(&outcome.obs);
                    runner.feat_cur = Some(Arc::new(agent.encode_features(&cur_tensor)?));
                    runner.cur_tensor = Some(cur_tensor);
                    runner.pending_labels = (outcome.aux_step_label, outcome.aux_term_label);
                }
                // undone steps keep pose, observation, and labels unchanged
            }

            // bootstrap value for the truncated tail
            let bootstrap = if transitions.last().map(|t| t.done).unwrap_or(true) {
                0.0
            } else {
                let (out, _) = agent.policy_forward_features(
                    runner.feat_cur.as_ref().unwrap(),
                    runner.feat_tgt.as_ref().unwrap(),
                )?;
                out.value as f64
            };

            Ok(WorkerOut { transitions, bootstrap, events })
        })
        .collect();

    let mut buffer = RolloutBuffer::default();
    for (env_idx, res) in results.into_iter().enumerate() {
        let out = res?;
        let start = buffer.transitions.len();
        let len = out.transitions.len();
        debug_assert_eq!(len, steps_per_env);
        buffer.transitions.extend(out.transitions);
        buffer.segments.push((start, len, out.bootstrap));
        buffer.episode_events.extend(out.events);
        debug_assert!(env_idx < n_envs);
    }
    Ok(buffer)
}

/// GAE over each environment segment:
/// `delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)` and
/// `A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}`; returns are
/// `A_t + V(s_t)`. The segment tail bootstraps from the stored value.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lam: f64) {
    let n = buffer.transitions.len();
    buffer.advantages = vec![0.0; n];
    buffer.returns = vec![0.0; n];
    for &(start, len, bootstrap) in &buffer.segments {
        let mut gae = 0.0;
        for i in (start..start + len).rev() {
            let t = &buffer.transitions[i];
            let nonterminal = if t.done { 0.0 } else { 1.0 };
            let next_v = if i + 1 < start + len { buffer.transitions[i + 1].value } else { bootstrap };
            let delta = t.reward + gamma * next_v * nonterminal - t.value;
            gae = delta + gamma * lam * nonterminal * gae;
            buffer.advantages[i] = gae;
            buffer.returns[i] = gae + t.value;
        }
    }
}

/// Loss coefficients of the composite objective.
#[derive(Debug, Clone, Copy)]
pub struct LossCoeffs {
    pub clip_eps: f64,
    pub lambda_v: f64,
    pub lambda_e: f64,
    pub lambda_d: f64,
}

/// Per-minibatch loss terms (all already weighted and averaged).
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub ppo: f64,
    pub value: f64,
    pub entropy: f64,
    pub step: f64,
    pub term: f64,
    pub clipped: usize,
    pub ratio_count: usize,
}

impl LossTerms {
    pub fn total(&self, c: &LossCoeffs) -> f64 {
        self.ppo + c.lambda_v * self.value - c.lambda_e * self.entropy + c.lambda_d * (self.step + self.term)
    }

    fn add(&mut self, o: &LossTerms) {
        self.ppo += o.ppo;
        self.value += o.value;
        self.entropy += o.entropy;
        self.step += o.step;
        self.term += o.term;
        self.clipped += o.clipped;
        self.ratio_count += o.ratio_count;
    }
}

/// One sample of the composite loss, generic over precision so the same
/// code runs under the f64 finite-difference oracle.
pub struct LossSample<'a, S> {
    /// Inputs: observation tensors (`from_features = false`) or encoder
    /// features (`from_features = true`, frozen encoder only).
    pub cur: &'a Tensor<S>,
    pub tgt: &'a Tensor<S>,
    pub from_features: bool,
    pub action_index: usize,
    /// False for terminate transitions: no motion was executed, so the
    /// sample is excluded from the surrogate ratio.
    pub in_ratio: bool,
    pub logp_old: f64,
    /// Normalized advantage.
    pub advantage: f64,
    pub ret: f64,
    pub step_label: f64,
    pub term_label: f64,
}

/// Stable binary cross-entropy from a logit; returns `(loss, dloss/dlogit)`.
fn bce_with_logit<S: Scalar>(logit: S, label: f64) -> (f64, S) {
    let l = logit.to_f64();
    let loss = l.max(0.0) - l * label + (1.0 + (-l.abs()).exp()).ln();
    let grad = sigmoid(logit) - S::from_f64(label);
    (loss, grad)
}

/// Forward + analytic backward of the composite loss for one sample.
/// Gradients are accumulated into `gbuf` already scaled by the averaging
/// weights (`1/n_ratio` for the surrogate, `1/n_all` for the rest).
#[allow(clippy::too_many_arguments)]
pub fn sample_loss_and_grad<S: Scalar>(
    agent: &Agent<S>,
    sample: &LossSample<'_, S>,
    coeffs: &LossCoeffs,
    n_ratio: f64,
    n_all: f64,
    gbuf: &mut GradBuffer<S>,
) -> Result<LossTerms, NnError> {
    let (out, cache): (_, ForwardCache<S>) = if sample.from_features {
        agent.policy_forward_features(sample.cur, sample.tgt)?
    } else {
        agent.policy_forward(sample.cur, sample.tgt)?
    };

    let n_actions = out.logits.len();
    // log-softmax in working precision
    let mut max_logit = out.logits[0];
    for &l in &out.logits[1..] {
        max_logit = max_logit.maximum(l);
    }
    let mut z = S::ZERO;
    for &l in &out.logits {
        z += (l - max_logit).exp();
    }
    let lse = max_logit + z.ln();
    let log_probs: Vec<S> = out.logits.iter().map(|&l| l - lse).collect();
    let probs: Vec<S> = log_probs.iter().map(|&lp| lp.exp()).collect();

    let mut terms = LossTerms::default();
    let mut hg = HeadGrads::zeros(n_actions);

    // clipped surrogate on the executed motion action
    if sample.in_ratio {
        let logp_new = log_probs[sample.action_index].to_f64();
        let ratio = (logp_new - sample.logp_old).exp();
        let adv = sample.advantage;
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - coeffs.clip_eps, 1.0 + coeffs.clip_eps) * adv;
        terms.ppo = -unclipped.min(clipped) / n_ratio;
        terms.ratio_count = 1;
        if (ratio - 1.0).abs() > coeffs.clip_eps {
            terms.clipped = 1;
        }
        // gradient flows only through the unclipped branch of the min
        if unclipped <= clipped {
            let g = S::from_f64(-adv * ratio / n_ratio);
            for j in 0..n_actions {
                let indicator = if j == sample.action_index { S::ONE } else { S::ZERO };
                hg.d_logits[j] += g * (indicator - probs[j]);
            }
        }
    }

    // entropy bonus (maximized, hence negative sign in the total)
    let mut entropy = S::ZERO;
    for (p, lp) in probs.iter().zip(log_probs.iter()) {
        entropy += -(*p) * *lp;
    }
    terms.entropy = entropy.to_f64() / n_all;
    let le = S::from_f64(coeffs.lambda_e / n_all);
    for j in 0..n_actions {
        // d(-lambda_e H)/dl_j = lambda_e p_j (lp_j + H)
        hg.d_logits[j] += le * probs[j] * (log_probs[j] + entropy);
    }

    // value regression
    let err = out.value.to_f64() - sample.ret;
    terms.value = err * err / n_all;
    hg.d_value = S::from_f64(coeffs.lambda_v * 2.0 * err / n_all);

    // auxiliary BCE heads
    let (step_loss, step_grad) = bce_with_logit(out.step_logit, sample.step_label);
    let (term_loss, term_grad) = bce_with_logit(out.term_logit, sample.term_label);
    terms.step = step_loss / n_all;
    terms.term = term_loss / n_all;
    let ld = S::from_f64(coeffs.lambda_d / n_all);
    hg.d_step_logit = ld * step_grad;
    hg.d_term_logit = ld * term_grad;

    agent.backward(&cache, &hg, gbuf)?;
    Ok(terms)
}

/// Metrics from one [`ppo_update`].
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateMetrics {
    pub loss_ppo: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub loss_step: f64,
    pub loss_term: f64,
    pub clip_frac: f64,
    pub grad_scale: f64,
}

/// Four epochs of shuffled minibatches over the rollout: normalize
/// advantages per minibatch, accumulate gradients over fixed chunks,
/// clip the global norm, and take an Adam step.
pub fn ppo_update(
    agent: &mut Agent<f32>,
    adam: &mut AdamState<f32>,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    update_idx: usize,
) -> Result<UpdateMetrics, PpoError> {
    debug_assert_eq!(buffer.advantages.len(), buffer.transitions.len());
    let aux_on = update_idx >= cfg.aux_enable_update();
    let coeffs = LossCoeffs {
        clip_eps: cfg.clip_eps,
        lambda_v: cfg.lambda_v,
        lambda_e: entropy_coef(update_idx, cfg.total_updates, cfg.entropy_start, cfg.entropy_end),
        lambda_d: if aux_on { cfg.lambda_d } else { 0.0 },
    };
    let frozen = agent.config().freeze_encoder;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(crate::streams::shuffle(update_idx));

    let mut totals = UpdateMetrics::default();
    let mut n_minibatches = 0usize;

    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    for epoch in 0..cfg.epochs_per_update {
        indices.shuffle(&mut rng);
        for (mb_idx, mb) in indices.chunks(cfg.minibatch).enumerate() {
            // per-minibatch advantage normalization
            let mean: f64 = mb.iter().map(|&i| buffer.advantages[i]).sum::<f64>() / mb.len() as f64;
            let var: f64 = mb.iter().map(|&i| (buffer.advantages[i] - mean).powi(2)).sum::<f64>() / mb.len() as f64;
            let std = var.sqrt().max(1e-8);

            let n_ratio = mb.iter().filter(|&&i| !buffer.transitions[i].terminate).count().max(1) as f64;
            let n_all = mb.len() as f64;

            // fixed-chunk parallel gradient accumulation
            let chunk_size = mb.len().div_ceil(cfg.grad_chunks);
            let chunk_results: Vec<Result<(GradBuffer<f32>, LossTerms), PpoError>> = mb
                .par_chunks(chunk_size)
                .map(|chunk| {
                    let mut gbuf = GradBuffer::zeros_like(&agent.params);
                    let mut terms = LossTerms::default();
                    let mut obs_scratch: Vec<(Tensor<f32>, Tensor<f32>)> = Vec::new();
                    for &i in chunk {
                        let t = &buffer.transitions[i];
                        let adv = (buffer.advantages[i] - mean) / std;
                        let (cur_ref, tgt_ref, from_features): (&Tensor<f32>, &Tensor<f32>, bool) = if frozen {
                            (&t.feat_cur, &t.feat_tgt, true)
                        } else {
                            obs_scratch.push((obs_to_tensor(&t.obs_cur), obs_to_tensor(&t.obs_tgt)));
                            let last = obs_scratch.last().unwrap();
                            (&last.0, &last.1, false)
                        };
                        let sample = LossSample {
                            cur: cur_ref,
                            tgt: tgt_ref,
                            from_features,
                            action_index: t.action_index,
                            in_ratio: !t.terminate,
                            logp_old: t.logp,
                            advantage: adv,
                            ret: buffer.returns[i],
                            step_label: if t.step_label_coarse { 1.0 } else { 0.0 },
                            term_label: if t.term_label { 1.0 } else { 0.0 },
                        };
                        let st = sample_loss_and_grad(agent, &sample, &coeffs, n_ratio, n_all, &mut gbuf)?;
                        terms.add(&st);
                        obs_scratch.clear();
                    }
                    Ok((gbuf, terms))
                })
                .collect();

            agent.params.zero_grads();
            let mut terms = LossTerms::default();
            for res in chunk_results {
                let (gbuf, t) = res?;
                gbuf.merge_into(&mut agent.params, 1.0);
                terms.add(&t);
            }

            let total = terms.total(&coeffs);
            if !total.is_finite() {
                return Err(PpoError::NonFiniteLoss { update: update_idx, epoch, minibatch: mb_idx, terms });
            }

            let scale = clip_grad_norm(&mut agent.params, cfg.max_grad_norm);
            adam_step(&mut agent.params, adam, cfg.lr, 0.9, 0.999, 1e-8);

            totals.loss_ppo += terms.ppo;
            totals.loss_value += terms.value;
            totals.entropy += terms.entropy;
            totals.loss_step += terms.step;
            totals.loss_term += terms.term;
            totals.clip_frac += terms.clipped as f64 / terms.ratio_count.max(1) as f64;
            totals.grad_scale += scale;
            n_minibatches += 1;
        }
    }

    let inv = 1.0 / n_minibatches.max(1) as f64;
    Ok(UpdateMetrics {
        loss_ppo: totals.loss_ppo * inv,
        loss_value: totals.loss_value * inv,
        entropy: totals.entropy * inv,
        loss_step: totals.loss_step * inv,
        loss_term: totals.loss_term * inv,
        clip_frac: totals.clip_frac * inv,
        grad_scale: totals.grad_scale * inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::env::{AugConfig, EnvConfig};
    use crate::scene::generate_synthetic_scene;
    use rand::Rng;

    fn toy_env_cfg() -> EnvConfig {
        EnvConfig {
            h: 32,
            w: 32,
            axes: vec![0, 1],
            aug: AugConfig::disabled(),
            m_succ: 100.0,
            ..EnvConfig::default()
        }
    }

    fn toy_agent_cfg(freeze: bool) -> AgentConfig {
        AgentConfig {
            h: 32,
            w: 32,
            enc_channels: vec![6, 8, 16],
            embed_dim: 16,
            head_hidden: 16,
            n_actions: 4,
            freeze_encoder: freeze,
        }
    }

    fn toy_train_cfg() -> TrainConfig {
        TrainConfig {
            rollout_len: 64,
            minibatch: 16,
            n_envs: 2,
            grad_chunks: 2,
            total_updates: 8,
            curriculum_stages: vec![100.0],
            ..TrainConfig::default()
        }
    }

    fn runners(n: usize) -> Vec<EnvRunner> {
        let scene = Arc::new(generate_synthetic_scene(42, 2, 6.0));
        (0..n)
            .map(|_| EnvRunner::new(RegEnv::new(Arc::clone(&scene), toy_env_cfg()).unwrap()))
            .collect()
    }

    #[test]
    fn entropy_coef_endpoints_and_midpoint() {
        assert_eq!(entropy_coef(0, 100, 0.05, 0.0), 0.05);
        assert_eq!(entropy_coef(100, 100, 0.05, 0.0), 0.0);
        assert!((entropy_coef(50, 100, 0.05, 0.0) - 0.025).abs() < 1e-12);
    }

    #[test]
    fn rollout_has_exact_length_and_is_deterministic() {
        let agent = Agent::<f32>::new(toy_agent_cfg(true), 3).unwrap();
        let cfg = toy_train_cfg();
        let mut r1 = runners(2);
        let b1 = collect_rollout(&mut r1, &agent, &cfg, 0, false).unwrap();
        assert_eq!(b1.len(), 64);
        let mut r2 = runners(2);
        let b2 = collect_rollout(&mut r2, &agent, &cfg, 0, false).unwrap();
        assert_eq!(b1.len(), b2.len());
        for (a, b) in b1.transitions.iter().zip(b2.transitions.iter()) {
            assert_eq!(a.action_index, b.action_index);
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.logp, b.logp);
        }
    }

    #[test]
    fn stored_logp_matches_full_forward_recomputation() {
        let agent = Agent::<f32>::new(toy_agent_cfg(true), 4).unwrap();
        let cfg = toy_train_cfg();
        let mut rs = runners(2);
        let buffer = collect_rollout(&mut rs, &agent, &cfg, 0, false).unwrap();
        for t in buffer.transitions.iter().step_by(7) {
            let cur = obs_to_tensor::<f32>(&t.obs_cur);
            let tgt = obs_to_tensor::<f32>(&t.obs_tgt);
            let (out, _) = agent.policy_forward(&cur, &tgt).unwrap();
            let dist = crate::nn::Categorical::from_logits(&out.logits_f64());
            let lp = dist.log_prob(t.action_index);
            assert!((lp - t.logp).abs() < 1e-6, "{lp} vs {}", t.logp);
        }
    }

    #[test]
    fn gae_single_terminal_step() {
        let mut buffer = RolloutBuffer::default();
        buffer.transitions.push(fake_transition(1.0, 0.0, true));
        buffer.segments.push((0, 1, 0.0));
        compute_gae(&mut buffer, 0.98, 0.95);
        assert!((buffer.advantages[0] - 1.0).abs() < 1e-12);
        assert!((buffer.returns[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gae_hand_recurrence_two_steps() {
        // r = (0, 1), V = 0, terminal at the end:
        // A_last = 1, A_first = 0.98 * 0.95 * 1 = 0.931
        let mut buffer = RolloutBuffer::default();
        buffer.transitions.push(fake_transition(0.0, 0.0, false));
        buffer.transitions.push(fake_transition(1.0, 0.0, true));
        buffer.segments.push((0, 2, 0.0));
        compute_gae(&mut buffer, 0.98, 0.95);
        assert!((buffer.advantages[1] - 1.0).abs() < 1e-12);
        assert!((buffer.advantages[0] - 0.931).abs() < 1e-12);
    }

    #[test]
    fn gae_respects_episode_boundaries() {
        // done at t=1: A_0 and A_1 must be independent of rewards after t=1
        let make = |tail_reward: f64| {
            let mut buffer = RolloutBuffer::default();
            buffer.transitions.push(fake_transition(0.5, 0.1, false));
            buffer.transitions.push(fake_transition(1.0, 0.2, true));
            buffer.transitions.push(fake_transition(tail_reward, 0.3, false));
            buffer.segments.push((0, 3, 7.0));
            compute_gae(&mut buffer, 0.98, 0.95);
            (buffer.advantages[0], buffer.advantages[1])
        };
        assert_eq!(make(100.0), make(-100.0));
    }

    #[test]
    fn gae_lambda_zero_is_td_residual_lambda_one_is_mc() {
        // five-step hand-built buffer
        let rewards = [0.5, -1.0, 2.0, 0.0, 1.0];
        let values = [0.3, 0.2, -0.1, 0.4, 0.1];
        let mut buffer = RolloutBuffer::default();
        for i in 0..5 {
            buffer.transitions.push(fake_transition(rewards[i], values[i], i == 4));
        }
        buffer.segments.push((0, 5, 0.0));

        compute_gae(&mut buffer, 0.98, 0.0);
        for i in 0..5 {
            let next_v = if i == 4 { 0.0 } else { values[i + 1] };
            let done = i == 4;
            let delta = rewards[i] + 0.98 * next_v * if done { 0.0 } else { 1.0 } - values[i];
            assert!((buffer.advantages[i] - delta).abs() < 1e-12);
        }

        compute_gae(&mut buffer, 1.0, 1.0);
        for i in 0..5 {
            let mc: f64 = rewards[i..5].iter().sum();
            assert!((buffer.advantages[i] - (mc - values[i])).abs() < 1e-12);
        }
    }

    fn fake_transition(reward: f64, value: f64, done: bool) -> Transition {
        let obs = Arc::new(Observation::zeros(2, 2));
        let feat = Arc::new(Tensor::<f32>::zeros(&[1, 1, 1]));
        Transition {
            obs_cur: Arc::clone(&obs),
            obs_tgt: obs,
            feat_cur: Arc::clone(&feat),
            feat_tgt: feat,
            action_index: 0,
            terminate: false,
            coarse: false,
            logp: -1.0,
            value,
            reward,
            done,
            m: 0.0,
            step_label_coarse: false,
            term_label: false,
        }
    }

    #[test]
    fn ppo_update_runs_and_reports_sane_metrics() {
        let mut agent = Agent::<f32>::new(toy_agent_cfg(true), 5).unwrap();
        let mut adam = AdamState::new(&agent.params);
        let cfg = toy_train_cfg();
        let mut rs = runners(2);
        let mut buffer = collect_rollout(&mut rs, &agent, &cfg, 0, false).unwrap();
        compute_gae(&mut buffer, cfg.gamma, cfg.gae_lambda);
        let metrics = ppo_update(&mut agent, &mut adam, &buffer, &cfg, 0).unwrap();
        assert!((0.0..=1.0).contains(&metrics.clip_frac));
        assert!(metrics.entropy > 0.0 && metrics.entropy <= (4.0f64).ln() + 1e-6);
        assert!(metrics.loss_value >= 0.0);
        assert!(metrics.loss_step >= 0.0 && metrics.loss_term >= 0.0);
    }

    #[test]
    fn frozen_encoder_is_bitwise_unchanged_by_updates() {
        let mut agent = Agent::<f32>::new(toy_agent_cfg(true), 6).unwrap();
        let enc_before: Vec<Vec<f32>> = agent
            .encoder_param_names()
            .iter()
            .map(|n| agent.params.value(agent.params.find(n).unwrap()).data().to_vec())
            .collect();
        let mut adam = AdamState::new(&agent.params);
        let cfg = toy_train_cfg();
        let mut rs = runners(2);
        for u in 0..2 {
            let mut buffer = collect_rollout(&mut rs, &agent, &cfg, u, false).unwrap();
            compute_gae(&mut buffer, cfg.gamma, cfg.gae_lambda);
            ppo_update(&mut agent, &mut adam, &buffer, &cfg, u).unwrap();
        }
        for (name, before) in agent.encoder_param_names().iter().zip(enc_before.iter()) {
            let id = agent.params.find(name).unwrap();
            assert_eq!(agent.params.value(id).data(), &before[..], "{name} drifted");
        }
        // non-frozen parameters did move
        let id = agent.params.find("actor.w").unwrap();
        let fresh = Agent::<f32>::new(toy_agent_cfg(true), 6).unwrap();
        assert_ne!(agent.params.value(id).data(), fresh.params.value(id).data());
    }

    #[test]
    fn composite_loss_gradient_matches_finite_differences() {
        // f64 agent, 4-transition toy buffer, >= 20 random directions
        let mut agent = Agent::<f64>::new(
            AgentConfig {
                h: 16,
                w: 16,
                enc_channels: vec![6, 8],
                embed_dim: 8,
                head_hidden: 8,
                n_actions: 4,
                freeze_encoder: false,
            },
            11,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let len = 6 * 16 * 16;
        let mk = |rng: &mut ChaCha8Rng| {
            Tensor::<f64>::from_vec(&[6, 16, 16], (0..len).map(|_| rng.random_range(0.0..1.0)).collect())
        };
        let obs: Vec<(Tensor<f64>, Tensor<f64>)> = (0..4).map(|_| (mk(&mut rng), mk(&mut rng))).collect();
        let samples: Vec<(usize, bool, f64, f64, f64, f64, f64)> = (0..4)
            .map(|i| {
                (
                    i % 4,
                    i != 2, // one terminate-masked sample
                    rng.random_range(-1.5..-0.5),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-2.0..2.0),
                    f64::from(u8::from(i % 2 == 0)),
                    f64::from(u8::from(i == 3)),
                )
            })
            .collect();
        let coeffs = LossCoeffs { clip_eps: 0.3, lambda_v: 0.5, lambda_e: 0.03, lambda_d: 0.5 };

        let eval = |agent: &Agent<f64>, gbuf: Option<&mut GradBuffer<f64>>| -> f64 {
            let mut scratch = GradBuffer::zeros_like(&agent.params);
            let gb = match gbuf {
                Some(g) => g,
                None => &mut scratch,
            };
            let n_ratio = samples.iter().filter(|s| s.1).count() as f64;
            let n_all = samples.len() as f64;
            let mut total = LossTerms::default();
            for (i, s) in samples.iter().enumerate() {
                let sample = LossSample {
                    cur: &obs[i].0,
                    tgt: &obs[i].1,
                    from_features: false,
                    action_index: s.0,
                    in_ratio: s.1,
                    logp_old: s.2,
                    advantage: s.3,
                    ret: s.4,
                    step_label: s.5,
                    term_label: s.6,
                };
                let t = sample_loss_and_grad(agent, &sample, &coeffs, n_ratio, n_all, gb).unwrap();
                total.add(&t);
            }
            total.total(&coeffs)
        };

        let mut gbuf = GradBuffer::zeros_like(&agent.params);
        let _ = eval(&agent, Some(&mut gbuf));
        agent.params.zero_grads();
        gbuf.merge_into(&mut agent.params, 1.0);
        let analytic = agent.params.grad_flat();
        let snapshot = agent.params.snapshot();

        let h = 1e-5;
        let mut checked = 0;
        for _ in 0..22 {
            let dir: Vec<f64> = (0..snapshot.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ana: f64 = analytic.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
            let plus: Vec<f64> = snapshot.iter().zip(dir.iter()).map(|(x, d)| x + h * d).collect();
            agent.params.restore(&plus);
            let lp = eval(&agent, None);
            let minus: Vec<f64> = snapshot.iter().zip(dir.iter()).map(|(x, d)| x - h * d).collect();
            agent.params.restore(&minus);
            let lm = eval(&agent, None);
            agent.params.restore(&snapshot);
            let num = (lp - lm) / (2.0 * h);
            let denom = ana.abs().max(num.abs()).max(1e-9);
            assert!((ana - num).abs() / denom < 1e-4, "analytic {ana} vs fd {num}");
            checked += 1;
        }
        assert!(checked >= 20);
    }

    #[test]
    fn update_is_deterministic() {
        let run = || {
            let mut agent = Agent::<f32>::new(toy_agent_cfg(true), 9).unwrap();
            let mut adam = AdamState::new(&agent.params);
            let cfg = toy_train_cfg();
            let mut rs = runners(2);
            for u in 0..2 {
                let mut buffer = collect_rollout(&mut rs, &agent, &cfg, u, false).unwrap();
                compute_gae(&mut buffer, cfg.gamma, cfg.gae_lambda);
                ppo_update(&mut agent, &mut adam, &buffer, &cfg, u).unwrap();
            }
            agent.params.snapshot()
        };
        assert_eq!(run(), run());
    }
}
