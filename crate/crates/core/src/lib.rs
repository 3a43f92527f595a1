//! Render-and-compare rigid registration as a discrete-action
//! reinforcement-learning problem.
//!
//! The crate provides the full pipeline at desk scale on synthetic meshes:
//!
//! - [`se3`]: SE(3)/SO(3) pose math and the point-based pose error metric
//! - [`camera`], [`scene`], [`raster`], [`obs`]: pinhole projection, labeled
//!   meshes, CPU z-buffer rasterization, and six-channel observations
//! - [`env`]: the sequential pose-refinement environment with reward
//!   shaping, curriculum, target augmentation, and the empty-view undo
//! - [`nn`]: a minimal dense substrate with analytic backward passes,
//!   Adam, gradient clipping, and categorical utilities
//! - [`agent`]: the Siamese actor-critic with four heads and checkpointing
//! - [`ppo`], [`pretrain`], [`train`]: rollout collection, GAE, the
//!   composite PPO update, supervised warm start, and the training loop
//! - [`infer`]: inference with termination-confidence stopping, the
//!   threshold sweep, and summary statistics
//! - [`config`]: the sectioned `key = value` run-configuration format

pub mod agent;
pub mod camera;

/// ChaCha stream identifiers, namespaced by purpose in the top bits so
/// rollout, shuffle, pretrain, and evaluation randomness never collide
/// for a given base seed.
pub mod streams {
    pub const COLLECT_BASE: u64 = 1 << 60;
    pub const SHUFFLE_BASE: u64 = 2 << 60;
    pub const PRETRAIN: u64 = 3 << 60;
    pub const EVAL_BASE: u64 = 4 << 60;

    pub fn collect(update_idx: usize, env_idx: usize) -> u64 {
        COLLECT_BASE | ((update_idx as u64) << 16) | env_idx as u64
    }

    pub fn shuffle(update_idx: usize) -> u64 {
        SHUFFLE_BASE | update_idx as u64
    }

    pub fn eval_pair(pair_idx: usize) -> u64 {
        EVAL_BASE | pair_idx as u64
    }
}
pub mod config;
pub mod env;
pub mod infer;
pub mod nn;
pub mod obs;
#[cfg(any(test, feature = "test-oracles"))]
pub mod oracles;
pub mod ppo;
pub mod pretrain;
pub mod raster;
pub mod scene;
pub mod se3;
pub mod train;
