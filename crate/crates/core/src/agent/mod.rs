//! The Siamese actor-critic: a shared-weight convolutional encoder applied
//! to the current and target observations, channel-wise fusion through a
//! residual block, global average pooling, and four heads (actor over the
//! discrete actions, scalar critic, step-granularity, termination).

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointExtras};

use crate::env::{ActionCommand, ActionSpace, Granularity};
use crate::nn::{
    channel_concat, channel_concat_backward, conv2d_backward, conv2d_forward, gaussian,
    global_avg_pool, global_avg_pool_backward, linear_backward, linear_forward, relu,
    relu_backward, residual_add, sigmoid, Categorical, GradBuffer, NnError, ParamId, ParamStore,
    Scalar, Tensor,
};
use crate::obs::{Observation, N_CHANNELS};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Input resolution (must match the environment's observations).
    pub h: usize,
    pub w: usize,
    /// Per-stage channel widths of the encoder, starting at the six input
    /// channels; each stage is a stride-2 3x3 convolution + ReLU.
    pub enc_channels: Vec<usize>,
    /// Fused embedding width (channel count of the residual block and the
    /// pooled embedding).
    pub embed_dim: usize,
    /// Hidden width of the shared MLP trunk feeding the heads.
    pub head_hidden: usize,
    /// Number of discrete motion actions (two per enabled axis).
    pub n_actions: usize,
    /// Keep the Siamese encoder stages fixed during RL updates.
    pub freeze_encoder: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            h: 128,
            w: 128,
            enc_channels: vec![6, 16, 32, 64, 128],
            embed_dim: 128,
            head_hidden: 64,
            n_actions: 12,
            freeze_encoder: true,
        }
    }
}

impl AgentConfig {
    pub fn n_stages(&self) -> usize {
        self.enc_channels.len() - 1
    }

    /// Spatial side lengths of the encoder output.
    pub fn feat_hw(&self) -> (usize, usize) {
        let mut h = self.h;
        let mut w = self.w;
        for _ in 0..self.n_stages() {
            h = (h + 2 - 3) / 2 + 1;
            w = (w + 2 - 3) / 2 + 1;
        }
        (h, w)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.enc_channels.len() < 2 {
            return Err("enc_channels needs at least one stage".into());
        }
        if self.enc_channels[0] != N_CHANNELS {
            return Err(format!("enc_channels[0] must be {N_CHANNELS}"));
        }
        if self.enc_channels.iter().any(|&c| c == 0) || self.embed_dim == 0 || self.head_hidden == 0 {
            return Err("all widths must be positive".into());
        }
        if self.n_actions == 0 || self.n_actions % 2 != 0 {
            return Err("n_actions must be a positive even count".into());
        }
        let (fh, fw) = self.feat_hw();
        if fh == 0 || fw == 0 {
            return Err(format!("{}x{} input collapses below 1x1 after {} stages", self.h, self.w, self.n_stages()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let chans: Vec<String> = self.enc_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "h = {}\nw = {}\nenc_channels = {}\nembed_dim = {}\nhead_hidden = {}\nn_actions = {}\nfreeze_encoder = {}\n",
            self.h, self.w, chans.join(","), self.embed_dim, self.head_hidden, self.n_actions, self.freeze_encoder
        )
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut cfg = AgentConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("bad config line {line:?}"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "h" => cfg.h = value.parse().map_err(|e| format!("h: {e}"))?,
                "w" => cfg.w = value.parse().map_err(|e| format!("w: {e}"))?,
                "enc_channels" => {
                    cfg.enc_channels = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|e| format!("enc_channels: {e}")))
                        .collect::<Result<_, _>>()?;
                }
                "embed_dim" => cfg.embed_dim = value.parse().map_err(|e| format!("embed_dim: {e}"))?,
                "head_hidden" => cfg.head_hidden = value.parse().map_err(|e| format!("head_hidden: {e}"))?,
                "n_actions" => cfg.n_actions = value.parse().map_err(|e| format!("n_actions: {e}"))?,
                "freeze_encoder" => cfg.freeze_encoder = value.parse().map_err(|e| format!("freeze_encoder: {e}"))?,
                other => return Err(format!("unknown agent config key {other:?}")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One forward pass worth of network outputs. `step_prob` is the
/// probability of a coarse step; probabilities come from sigmoids over the
/// cached logits.
#[derive(Debug, Clone)]
pub struct PolicyOutput<S> {
    pub logits: Vec<S>,
    pub value: S,
    pub step_logit: S,
    pub step_prob: S,
    pub term_logit: S,
    pub term_prob: S,
}

impl<S: Scalar> PolicyOutput<S> {
    pub fn all_finite(&self) -> bool {
        self.logits.iter().all(|l| l.is_finite())
            && self.value.is_finite()
            && self.step_prob.is_finite()
            && self.term_prob.is_finite()
    }

    pub fn logits_f64(&self) -> Vec<f64> {
        self.logits.iter().map(|l| l.to_f64()).collect()
    }
}

/// Upstream gradients at the head outputs; step/term are with respect to
/// the pre-sigmoid logits.
#[derive(Debug, Clone)]
pub struct HeadGrads<S> {
    pub d_logits: Vec<S>,
    pub d_value: S,
    pub d_step_logit: S,
    pub d_term_logit: S,
}

impl<S: Scalar> HeadGrads<S> {
    pub fn zeros(n_actions: usize) -> Self {
        HeadGrads {
            d_logits: vec![S::ZERO; n_actions],
            d_value: S::ZERO,
            d_step_logit: S::ZERO,
            d_term_logit: S::ZERO,
        }
    }
}

#[derive(Debug, Clone)]
struct EncoderIds {
    w: Vec<ParamId>,
    b: Vec<ParamId>,
}

#[derive(Debug, Clone)]
struct Ids {
    enc: EncoderIds,
    fuse_w1: ParamId,
    fuse_b1: ParamId,
    fuse_w2: ParamId,
    fuse_b2: ParamId,
    skip_w: ParamId,
    skip_b: ParamId,
    trunk_w: ParamId,
    trunk_b: ParamId,
    actor_w: ParamId,
    actor_b: ParamId,
    value_w: ParamId,
    value_b: ParamId,
    step_w: ParamId,
    step_b: ParamId,
    term_w: ParamId,
    term_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct Agent<S> {
    cfg: AgentConfig,
    pub params: ParamStore<S>,
    ids: Ids,
}

/// Intermediate activations of one encoder branch; `xs[i]` is the input to
/// stage `i`, `zs[i]` its pre-ReLU output, `xs.last()` the branch output.
pub struct EncoderCache<S> {
    xs: Vec<Tensor<S>>,
    zs: Vec<Tensor<S>>,
}

impl<S: Scalar> EncoderCache<S> {
    pub fn features(&self) -> &Tensor<S> {
        self.xs.last().unwrap()
    }
}

/// Per-branch cache: full activations when gradients must flow into the
/// encoder, or nothing when the branch started from precomputed features
/// (only valid with a frozen encoder).
pub enum BranchCache<S> {
    Full(EncoderCache<S>),
    Frozen,
}

/// Activations from the inputs through the pooled embedding.
pub struct EmbedCache<S> {
    branch_cur: BranchCache<S>,
    branch_tgt: BranchCache<S>,
    cat: Tensor<S>,
    z1: Tensor<S>,
    a1: Tensor<S>,
    pre: Tensor<S>,
    fused: Tensor<S>,
    pub embed: Tensor<S>,
}

/// Full forward cache including the head trunk.
pub struct ForwardCache<S> {
    pub embed_cache: EmbedCache<S>,
    tz: Tensor<S>,
    ta: Tensor<S>,
}

impl<S: Scalar> Agent<S> {
    /// Fresh agent with scaled-normal initialization (biases zero, actor
    /// head damped by 0.01 so the initial policy is near uniform).
    pub fn new(cfg: AgentConfig, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();

        let mut enc = EncoderIds { w: Vec::new(), b: Vec::new() };
        for i in 0..cfg.n_stages() {
            let (ci, co) = (cfg.enc_channels[i], cfg.enc_channels[i + 1]);
            let fan_in = ci * 9;
            enc.w.push(params.add(
                &format!("enc{i}.w"),
                init_normal(&[co, ci, 3, 3], (2.0 / fan_in as f64).sqrt(), &mut rng),
            ));
            enc.b.push(params.add(&format!("enc{i}.b"), Tensor::zeros(&[co])));
        }

        let c_top = *cfg.enc_channels.last().unwrap();
        let cat_c = 2 * c_top;
        let d = cfg.embed_dim;
        let fuse_w1 = params.add("fuse.conv1.w", init_normal(&[d, cat_c, 3, 3], (2.0 / (cat_c * 9) as f64).sqrt(), &mut rng));
        let fuse_b1 = params.add("fuse.conv1.b", Tensor::zeros(&[d]));
        let fuse_w2 = params.add("fuse.conv2.w", init_normal(&[d, d, 3, 3], (2.0 / (d * 9) as f64).sqrt(), &mut rng));
        let fuse_b2 = params.add("fuse.conv2.b", Tensor::zeros(&[d]));
        let skip_w = params.add("fuse.skip.w", init_normal(&[d, cat_c, 1, 1], (1.0 / cat_c as f64).sqrt(), &mut rng));
        let skip_b = params.add("fuse.skip.b", Tensor::zeros(&[d]));

        let hh = cfg.head_hidden;
        let trunk_w = params.add("trunk.w", init_normal(&[hh, d], (2.0 / d as f64).sqrt(), &mut rng));
        let trunk_b = params.add("trunk.b", Tensor::zeros(&[hh]));
        let actor_w = params.add("actor.w", init_normal(&[cfg.n_actions, hh], 0.01 / (hh as f64).sqrt(), &mut rng));
        let actor_b = params.add("actor.b", Tensor::zeros(&[cfg.n_actions]));
        let value_w = params.add("value.w", init_normal(&[1, hh], (1.0 / hh as f64).sqrt(), &mut rng));
        let value_b = params.add("value.b", Tensor::zeros(&[1]));
        let step_w = params.add("step.w", init_normal(&[1, hh], (1.0 / hh as f64).sqrt(), &mut rng));
        let step_b = params.add("step.b", Tensor::zeros(&[1]));
        let term_w = params.add("term.w", init_normal(&[1, hh], (1.0 / hh as f64).sqrt(), &mut rng));
        let term_b = params.add("term.b", Tensor::zeros(&[1]));

        let ids = Ids {
            enc,
            fuse_w1, fuse_b1, fuse_w2, fuse_b2, skip_w, skip_b,
            trunk_w, trunk_b, actor_w, actor_b, value_w, value_b, step_w, step_b, term_w, term_b,
        };
        let mut agent = Agent { cfg, params, ids };
        agent.apply_freeze();
        Ok(agent)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn apply_freeze(&mut self) {
        let frozen = self.cfg.freeze_encoder;
        for i in 0..self.ids.enc.w.len() {
            self.params.set_frozen(self.ids.enc.w[i], frozen);
            self.params.set_frozen(self.ids.enc.b[i], frozen);
        }
    }

    pub fn set_freeze_encoder(&mut self, freeze: bool) {
        self.cfg.freeze_encoder = freeze;
        self.apply_freeze();
    }

    /// Names of the encoder parameters (the freezable subset).
    pub fn encoder_param_names(&self) -> Vec<String> {
        (0..self.cfg.n_stages()).flat_map(|i| [format!("enc{i}.w"), format!("enc{i}.b")]).collect()
    }

    /// Shared-weight encoder on one observation tensor `[6,H,W]`.
    pub fn encode(&self, x: &Tensor<S>) -> Result<EncoderCache<S>, NnError> {
        if x.shape() != [N_CHANNELS, self.cfg.h, self.cfg.w] {
            return Err(NnError::ShapeMismatch {
                op: "encode",
                detail: format!("expected [{N_CHANNELS},{},{}], got {:?}", self.cfg.h, self.cfg.w, x.shape()),
            });
        }
        let mut xs = vec![x.clone()];
        let mut zs = Vec::with_capacity(self.cfg.n_stages());
        for i in 0..self.cfg.n_stages() {
            let z = conv2d_forward(
                xs.last().unwrap(),
                self.params.value(self.ids.enc.w[i]),
                self.params.value(self.ids.enc.b[i]),
                2,
                1,
            )?;
            xs.push(relu(&z));
            zs.push(z);
        }
        Ok(EncoderCache { xs, zs })
    }

    /// Encoder features only, for reuse across steps of an episode and
    /// across update epochs when the encoder is frozen.
    pub fn encode_features(&self, x: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let mut cache = self.encode(x)?;
        Ok(cache.xs.pop().unwrap())
    }

    /// Both branches through fusion and pooling.
    pub fn forward_embedding(&self, cur: &Tensor<S>, tgt: &Tensor<S>) -> Result<EmbedCache<S>, NnError> {
        let enc_cur = self.encode(cur)?;
        let enc_tgt = self.encode(tgt)?;
        let cat = channel_concat(enc_cur.features(), enc_tgt.features())?;
        self.fuse(cat, BranchCache::Full(enc_cur), BranchCache::Full(enc_tgt))
    }

    /// Fusion and pooling from precomputed encoder features. The encoder
    /// receives no gradient through this path, so it requires
    /// `freeze_encoder` when used for training.
    pub fn forward_embedding_features(&self, feat_cur: &Tensor<S>, feat_tgt: &Tensor<S>) -> Result<EmbedCache<S>, NnError> {
        let cat = channel_concat(feat_cur, feat_tgt)?;
        self.fuse(cat, BranchCache::Frozen, BranchCache::Frozen)
    }

    fn fuse(&self, cat: Tensor<S>, branch_cur: BranchCache<S>, branch_tgt: BranchCache<S>) -> Result<EmbedCache<S>, NnError> {
        let z1 = conv2d_forward(&cat, self.params.value(self.ids.fuse_w1), self.params.value(self.ids.fuse_b1), 1, 1)?;
        let a1 = relu(&z1);
        let z2 = conv2d_forward(&a1, self.params.value(self.ids.fuse_w2), self.params.value(self.ids.fuse_b2), 1, 1)?;
        let sk = conv2d_forward(&cat, self.params.value(self.ids.skip_w), self.params.value(self.ids.skip_b), 1, 0)?;
        let pre = residual_add(&z2, &sk)?;
        let fused = relu(&pre);
        let embed = global_avg_pool(&fused);
        Ok(EmbedCache { branch_cur, branch_tgt, cat, z1, a1, pre, fused, embed })
    }

    /// Heads on a pooled embedding.
    pub fn heads_forward(&self, embed: &Tensor<S>) -> Result<(PolicyOutput<S>, Tensor<S>, Tensor<S>), NnError> {
        let tz = linear_forward(embed, self.params.value(self.ids.trunk_w), self.params.value(self.ids.trunk_b))?;
        let ta = relu(&tz);
        let logits = linear_forward(&ta, self.params.value(self.ids.actor_w), self.params.value(self.ids.actor_b))?;
        let value = linear_forward(&ta, self.params.value(self.ids.value_w), self.params.value(self.ids.value_b))?;
        let step = linear_forward(&ta, self.params.value(self.ids.step_w), self.params.value(self.ids.step_b))?;
        let term = linear_forward(&ta, self.params.value(self.ids.term_w), self.params.value(self.ids.term_b))?;
        let step_logit = step.data()[0];
        let term_logit = term.data()[0];
        let out = PolicyOutput {
            logits: logits.data().to_vec(),
            value: value.data()[0],
            step_logit,
            step_prob: sigmoid(step_logit),
            term_logit,
            term_prob: sigmoid(term_logit),
        };
        Ok((out, tz, ta))
    }

    /// Full forward pass over an observation pair.
    pub fn policy_forward(&self, cur: &Tensor<S>, tgt: &Tensor<S>) -> Result<(PolicyOutput<S>, ForwardCache<S>), NnError> {
        let embed_cache = self.forward_embedding(cur, tgt)?;
        let (out, tz, ta) = self.heads_forward(&embed_cache.embed)?;
        Ok((out, ForwardCache { embed_cache, tz, ta }))
    }

    /// Forward pass from precomputed encoder features.
    pub fn policy_forward_features(&self, feat_cur: &Tensor<S>, feat_tgt: &Tensor<S>) -> Result<(PolicyOutput<S>, ForwardCache<S>), NnError> {
        let embed_cache = self.forward_embedding_features(feat_cur, feat_tgt)?;
        let (out, tz, ta) = self.heads_forward(&embed_cache.embed)?;
        Ok((out, ForwardCache { embed_cache, tz, ta }))
    }

    /// Backward from head gradients through the whole network into `gbuf`.
    pub fn backward(&self, cache: &ForwardCache<S>, hg: &HeadGrads<S>, gbuf: &mut GradBuffer<S>) -> Result<(), NnError> {
        let d_embed = self.backward_heads(cache, hg, gbuf)?;
        self.backward_embedding(&cache.embed_cache, &d_embed, gbuf)
    }

    /// Head and trunk gradients; returns the gradient at the embedding.
    pub fn backward_heads(&self, cache: &ForwardCache<S>, hg: &HeadGrads<S>, gbuf: &mut GradBuffer<S>) -> Result<Tensor<S>, NnError> {
        let ta = &cache.ta;
        let mut d_ta = Tensor::zeros(&[self.cfg.head_hidden]);

        let mut head = |w_id: ParamId, b_id: ParamId, dy: Tensor<S>, d_ta: &mut Tensor<S>| -> Result<(), NnError> {
            let (dx, dw, db) = linear_backward(ta, self.params.value(w_id), &dy)?;
            d_ta.add_assign(&dx);
            gbuf.accumulate(w_id, &dw);
            gbuf.accumulate(b_id, &db);
            Ok(())
        };
        head(self.ids.actor_w, self.ids.actor_b, Tensor::from_vec(&[hg.d_logits.len()], hg.d_logits.clone()), &mut d_ta)?;
        head(self.ids.value_w, self.ids.value_b, Tensor::scalar(hg.d_value), &mut d_ta)?;
        head(self.ids.step_w, self.ids.step_b, Tensor::scalar(hg.d_step_logit), &mut d_ta)?;
        head(self.ids.term_w, self.ids.term_b, Tensor::scalar(hg.d_term_logit), &mut d_ta)?;

        let d_tz = relu_backward(&cache.tz, &d_ta);
        let (d_embed, dw, db) = linear_backward(&cache.embed_cache.embed, self.params.value(self.ids.trunk_w), &d_tz)?;
        gbuf.accumulate(self.ids.trunk_w, &dw);
        gbuf.accumulate(self.ids.trunk_b, &db);
        Ok(d_embed)
    }

    /// Fusion-and-below gradients from a gradient at the embedding. With a
    /// frozen encoder the two Siamese branches are skipped entirely.
    pub fn backward_embedding(&self, cache: &EmbedCache<S>, d_embed: &Tensor<S>, gbuf: &mut GradBuffer<S>) -> Result<(), NnError> {
        let d_fused = global_avg_pool_backward(cache.fused.shape(), d_embed);
        let d_pre = relu_backward(&cache.pre, &d_fused);

        let (d_a1, dw2, db2) = conv2d_backward(&cache.a1, self.params.value(self.ids.fuse_w2), &d_pre, 1, 1)?;
        gbuf.accumulate(self.ids.fuse_w2, &dw2);
        gbuf.accumulate(self.ids.fuse_b2, &db2);

        let (d_cat_skip, dws, dbs) = conv2d_backward(&cache.cat, self.params.value(self.ids.skip_w), &d_pre, 1, 0)?;
        gbuf.accumulate(self.ids.skip_w, &dws);
        gbuf.accumulate(self.ids.skip_b, &dbs);

        let d_z1 = relu_backward(&cache.z1, &d_a1);
        let (d_cat_main, dw1, db1) = conv2d_backward(&cache.cat, self.params.value(self.ids.fuse_w1), &d_z1, 1, 1)?;
        gbuf.accumulate(self.ids.fuse_w1, &dw1);
        gbuf.accumulate(self.ids.fuse_b1, &db1);

        if !self.cfg.freeze_encoder {
            let (BranchCache::Full(enc_cur), BranchCache::Full(enc_tgt)) = (&cache.branch_cur, &cache.branch_tgt) else {
                return Err(NnError::ShapeMismatch {
                    op: "backward_embedding",
                    detail: "feature-path forward cannot backprop into an unfrozen encoder".into(),
                });
            };
            let mut d_cat = d_cat_main;
            d_cat.add_assign(&d_cat_skip);
            let c_top = *self.cfg.enc_channels.last().unwrap();
            let (d_cur, d_tgt) = channel_concat_backward(&d_cat, c_top);
            self.backward_encoder(enc_cur, d_cur, gbuf)?;
            self.backward_encoder(enc_tgt, d_tgt, gbuf)?;
        }
        Ok(())
    }

    fn backward_encoder(&self, cache: &EncoderCache<S>, d_out: Tensor<S>, gbuf: &mut GradBuffer<S>) -> Result<(), NnError> {
        let mut d = d_out;
        for i in (0..self.cfg.n_stages()).rev() {
            let d_z = relu_backward(&cache.zs[i], &d);
            let (d_x, dw, db) = conv2d_backward(&cache.xs[i], self.params.value(self.ids.enc.w[i]), &d_z, 2, 1)?;
            gbuf.accumulate(self.ids.enc.w[i], &dw);
            gbuf.accumulate(self.ids.enc.b[i], &db);
            d = d_x;
        }
        Ok(())
    }
}

fn init_normal<S: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<S> {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| S::from_f64(gaussian(rng) * std)).collect();
    Tensor::from_vec(shape, data)
}

/// Convert a rendered observation to a network input tensor.
pub fn obs_to_tensor<S: Scalar>(obs: &Observation) -> Tensor<S> {
    Tensor::from_vec(
        &[N_CHANNELS, obs.height, obs.width],
        obs.data.iter().map(|&v| S::from_f64(v as f64)).collect(),
    )
}

/// How [`select_action`] turns a policy output into a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Stochastic: categorical draw over the motion logits, Bernoulli draws
    /// for granularity and termination (in that fixed order).
    Sample,
    /// Deterministic: argmax logits, thresholded heads.
    Greedy,
}

/// Decode a policy output into an [`ActionCommand`]. In `Greedy` mode the
/// terminate flag is `term_prob > term_threshold`; in `Sample` mode it is
/// a Bernoulli draw on `term_prob`.
pub fn select_action<S: Scalar, R: Rng>(
    out: &PolicyOutput<S>,
    space: &ActionSpace,
    mode: SelectMode,
    rng: &mut R,
    term_threshold: f64,
) -> ActionCommand {
    debug_assert_eq!(out.logits.len(), space.n_actions());
    let dist = Categorical::from_logits(&out.logits_f64());
    let (index, coarse, terminate) = match mode {
        SelectMode::Sample => {
            let index = dist.sample(rng);
            let coarse = rng.random::<f64>() < out.step_prob.to_f64();
            let terminate = rng.random::<f64>() < out.term_prob.to_f64();
            (index, coarse, terminate)
        }
        SelectMode::Greedy => (
            dist.argmax(),
            out.step_prob.to_f64() > 0.5,
            out.term_prob.to_f64() > term_threshold,
        ),
    };
    let granularity = if coarse { Granularity::Coarse } else { Granularity::Fine };
    space.decode(index, granularity, terminate)
}
