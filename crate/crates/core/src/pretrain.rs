//! Supervised warm start: regress the normalized relative twist between
//! observation pairs through the encoder + fusion, using a temporary
//! 6-way head that is discarded afterwards. The encoder that results is
//! what `freeze_encoder` protects during PPO.

use crate::agent::{obs_to_tensor, Agent};
use crate::env::RegEnv;
use crate::nn::{
    adam_step, clip_grad_norm, linear_backward, linear_forward, AdamState, GradBuffer, ParamStore,
    Scalar, Tensor,
};
use crate::ppo::{PpoError, TrainConfig};
use crate::se3::{pose_compose, pose_inverse, se3_log};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Loss curves from a pretraining run (per epoch).
#[derive(Debug, Clone, Default)]
pub struct PretrainMetrics {
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
}

/// One supervised pair: observation tensors and the normalized relative
/// twist `log(T_tgt^{-1} T_cur)` scaled into `[-1, 1]^6`.
pub struct PretrainPair {
    pub cur: Tensor<f32>,
    pub tgt: Tensor<f32>,
    pub target: [f64; 6],
}

/// Normalize a relative twist by twice the sampling ranges (two
/// independent draws of each component), clamped to `[-1, 1]`.
pub fn normalize_twist(xi: &crate::se3::Twist, trans_range: f64, rot_range: f64) -> [f64; 6] {
    let mut out = [0.0; 6];
    let arr = xi.to_array();
    for i in 0..3 {
        out[i] = (arr[i] / (2.0 * trans_range)).clamp(-1.0, 1.0);
        out[i + 3] = (arr[i + 3] / (2.0 * rot_range)).clamp(-1.0, 1.0);
    }
    out
}

/// Sample observation pairs with known relative pose. Targets are
/// augmented exactly as during episode resets; current views are clean.
pub fn sample_pairs<R: rand::Rng>(
    env: &RegEnv,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PretrainPair>, PpoError> {
    let cfg = env.config();
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let pose_tgt = env.sample_valid_pose(rng)?;
        let pose_cur = env.sample_valid_pose(rng)?;
        let obs_tgt = crate::env::augment_target(&env.render_observation(&pose_tgt), rng, cfg);
        let obs_cur = env.render_observation(&pose_cur);
        let rel = pose_compose(&pose_inverse(&pose_tgt), &pose_cur);
        let xi = se3_log(&rel);
        pairs.push(PretrainPair {
            cur: obs_to_tensor(&obs_cur),
            tgt: obs_to_tensor(&obs_tgt),
            target: normalize_twist(&xi, cfg.trans_range, cfg.rot_range),
        });
    }
    Ok(pairs)
}

/// Smooth-L1 (Huber, delta = 1) and its derivative.
fn smooth_l1(e: f64) -> (f64, f64) {
    if e.abs() <= 1.0 {
        (0.5 * e * e, e)
    } else {
        (e.abs() - 0.5, e.signum())
    }
}

fn pair_loss_and_grad<S: Scalar>(
    agent: &Agent<S>,
    head: &ParamStore<S>,
    pair_cur: &Tensor<S>,
    pair_tgt: &Tensor<S>,
    target: &[f64; 6],
    inv_batch: f64,
    gbuf: &mut GradBuffer<S>,
    head_gbuf: &mut GradBuffer<S>,
) -> Result<f64, PpoError> {
    let cache = agent.forward_embedding(pair_cur, pair_tgt)?;
    let w = head.value(crate::nn::ParamId(0));
    let b = head.value(crate::nn::ParamId(1));
    let pred = linear_forward(&cache.embed, w, b)?;

    let mut loss = 0.0;
    let mut d_pred = Tensor::zeros(&[6]);
    for i in 0..6 {
        let e = pred.data()[i].to_f64() - target[i];
        let (l, g) = smooth_l1(e);
        loss += l / 6.0;
        d_pred.data_mut()[i] = S::from_f64(g / 6.0 * inv_batch);
    }

    let (d_embed, dw, db) = linear_backward(&cache.embed, w, &d_pred)?;
    head_gbuf.accumulate(crate::nn::ParamId(0), &dw);
    head_gbuf.accumulate(crate::nn::ParamId(1), &db);
    agent.backward_embedding(&cache, &d_embed, gbuf)?;
    Ok(loss * inv_batch)
}

/// Train encoder + fusion on the pose-regression task; the temporary head
/// lives only inside this function. Returns the loss curves.
pub fn pretrain_supervised(
    agent: &mut Agent<f32>,
    env: &RegEnv,
    cfg: &TrainConfig,
) -> Result<PretrainMetrics, PpoError> {
    let was_frozen = agent.config().freeze_encoder;
    agent.set_freeze_encoder(false);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(crate::streams::PRETRAIN);

    let pairs = sample_pairs(env, cfg.pretrain_pairs, &mut rng)?;
    let n_holdout = (pairs.len() / 10).max(1).min(pairs.len() - 1);
    let n_train = pairs.len() - n_holdout;

    // temporary regression head
    let mut head: ParamStore<f32> = ParamStore::new();
    let embed_dim = agent.config().embed_dim;
    let mut head_init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7E3);
    let wdata: Vec<f32> = (0..6 * embed_dim)
        .map(|_| (crate::nn::gaussian(&mut head_init_rng) / (embed_dim as f64).sqrt()) as f32)
        .collect();
    head.add("pretrain.w", Tensor::from_vec(&[6, embed_dim], wdata));
    head.add("pretrain.b", Tensor::zeros(&[6]));

    let mut adam = AdamState::new(&agent.params);
    let mut head_adam = AdamState::new(&head);

    let mut metrics = PretrainMetrics::default();
    let mut indices: Vec<usize> = (0..n_train).collect();
    let chunks = cfg.grad_chunks.max(1);

    let holdout_eval = |agent: &Agent<f32>, head: &ParamStore<f32>| -> f64 {
        let total: f64 = pairs[n_train..]
            .par_iter()
            .map(|p| {
                let cache = agent.forward_embedding(&p.cur, &p.tgt).unwrap();
                let pred = linear_forward(
                    &cache.embed,
                    head.value(crate::nn::ParamId(0)),
                    head.value(crate::nn::ParamId(1)),
                )
                .unwrap();
                (0..6)
                    .map(|i| smooth_l1(pred.data()[i] as f64 - p.target[i]).0 / 6.0)
                    .sum::<f64>()
            })
            .sum();
        total / n_holdout as f64
    };

    // epoch-0 baseline before any update
    metrics.holdout_loss.push(holdout_eval(agent, &head));

    for _epoch in 0..cfg.pretrain_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for mb in indices.chunks(cfg.pretrain_batch) {
            let inv_batch = 1.0 / mb.len() as f64;
            let chunk_size = mb.len().div_ceil(chunks);
            let results: Vec<Result<(GradBuffer<f32>, GradBuffer<f32>, f64), PpoError>> = mb
                .par_chunks(chunk_size)
                .map(|chunk| {
                    let mut gbuf = GradBuffer::zeros_like(&agent.params);
                    let mut head_gbuf = GradBuffer::zeros_like(&head);
                    let mut loss = 0.0;
                    for &i in chunk {
                        let p = &pairs[i];
                        loss += pair_loss_and_grad(
                            agent, &head, &p.cur, &p.tgt, &p.target, inv_batch, &mut gbuf, &mut head_gbuf,
                        )?;
                    }
                    Ok((gbuf, head_gbuf, loss))
                })
                .collect();

            agent.params.zero_grads();
            head.zero_grads();
            let mut batch_loss = 0.0;
            for r in results {
                let (g, hg, l) = r?;
                g.merge_into(&mut agent.params, 1.0);
                hg.merge_into(&mut head, 1.0);
                batch_loss += l;
            }
            clip_grad_norm(&mut agent.params, cfg.max_grad_norm);
            clip_grad_norm(&mut head, cfg.max_grad_norm);
            adam_step(&mut agent.params, &mut adam, cfg.pretrain_lr, 0.9, 0.999, 1e-8);
            adam_step(&mut head, &mut head_adam, cfg.pretrain_lr, 0.9, 0.999, 1e-8);
            epoch_loss += batch_loss;
            batches += 1;
        }
        metrics.train_loss.push(epoch_loss / batches.max(1) as f64);
        metrics.holdout_loss.push(holdout_eval(agent, &head));
    }

    agent.set_freeze_encoder(was_frozen);
    Ok(metrics)
}
