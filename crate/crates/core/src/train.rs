//! The training loop: optional supervised warm start, then repeated
//! collect / GAE / update with curriculum driving, metrics rows, and
//! crash-safe checkpointing.

use crate::agent::{save_checkpoint, Agent, CheckpointError, CheckpointExtras};
use crate::env::{Curriculum, DoneReason, EnvConfig, RegEnv};
use crate::nn::AdamState;
use crate::ppo::{collect_rollout, compute_gae, ppo_update, EnvRunner, PpoError, TrainConfig};
use crate::scene::SceneModel;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the metrics CSV.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub update_idx: usize,
    pub stage_m_succ: f64,
    pub success_rate_100: f64,
    pub mean_episode_len: f64,
    pub loss_ppo: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub loss_step: f64,
    pub loss_term: f64,
    pub clip_frac: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "update_idx,stage_m_succ,success_rate_100,mean_episode_len,loss_ppo,loss_value,entropy,loss_step,loss_term,clip_frac,wall_time_s";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.update_idx,
            self.stage_m_succ,
            self.success_rate_100,
            self.mean_episode_len,
            self.loss_ppo,
            self.loss_value,
            self.entropy,
            self.loss_step,
            self.loss_term,
            self.clip_frac,
            self.wall_time_s
        )
    }
}

/// Results of a completed training run.
pub struct TrainReport {
    pub metrics: Vec<MetricsRow>,
    /// Distinct success thresholds in the order they were visited.
    pub stages_visited: Vec<f64>,
    /// Best trailing-window success rate seen across updates.
    pub best_success_rate: f64,
    pub final_success_rate: f64,
}

impl TrainReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for row in &self.metrics {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }
}

/// Write a checkpoint atomically: temp file in the same directory, then
/// rename, so an abort mid-write never clobbers the previous checkpoint.
pub fn save_checkpoint_atomic(
    agent: &Agent<f32>,
    extras: &CheckpointExtras,
    path: &Path,
) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("ckpt.tmp");
    save_checkpoint(agent, extras, &tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run the PPO training loop. `agent` must already match the environment's
/// action space and resolution (warm-started or fresh). Checkpoints go to
/// `ckpt_path` when given (periodically per `checkpoint_every` and at the
/// end).
pub fn train_loop(
    scene: Arc<SceneModel>,
    env_cfg: &EnvConfig,
    agent: &mut Agent<f32>,
    train_cfg: &TrainConfig,
    ckpt_path: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    train_cfg.validate().map_err(TrainError::Config)?;
    env_cfg.validate().map_err(TrainError::Config)?;
    if agent.config().n_actions != env_cfg.action_space().n_actions() {
        return Err(TrainError::Config(format!(
            "agent has {} actions but the environment exposes {}",
            agent.config().n_actions,
            env_cfg.action_space().n_actions()
        )));
    }
    if (agent.config().h, agent.config().w) != (env_cfg.h, env_cfg.w) {
        return Err(TrainError::Config("agent and environment resolutions differ".into()));
    }

    let mut curriculum = Curriculum::new(train_cfg.curriculum_stages.clone());
    let mut env_cfg = env_cfg.clone();
    env_cfg.m_succ = curriculum.m_succ();

    let mut runners: Vec<EnvRunner> = (0..train_cfg.n_envs)
        .map(|_| RegEnv::new(Arc::clone(&scene), env_cfg.clone()).map(EnvRunner::new))
        .collect::<Result<_, _>>()?;

    let mut adam = AdamState::new(&agent.params);
    let start = Instant::now();
    let mut report = TrainReport {
        metrics: Vec::with_capacity(train_cfg.total_updates),
        stages_visited: vec![curriculum.m_succ()],
        best_success_rate: 0.0,
        final_success_rate: 0.0,
    };

    for update_idx in 0..train_cfg.total_updates {
        let allow_terminate = update_idx >= train_cfg.aux_enable_update();
        let mut buffer = collect_rollout(&mut runners, agent, train_cfg, update_idx, allow_terminate)?;

        let mut ep_len_sum = 0usize;
        let mut ep_count = 0usize;
        for ev in &buffer.episode_events {
            curriculum.record_episode(ev.reason == DoneReason::Success);
            ep_len_sum += ev.length;
            ep_count += 1;
        }
        let stage_before = curriculum.m_succ();
        let success_rate = curriculum.trailing_rate();

        compute_gae(&mut buffer, train_cfg.gamma, train_cfg.gae_lambda);
        let um = ppo_update(agent, &mut adam, &buffer, train_cfg, update_idx)?;

        let new_stage = curriculum.next();
        if new_stage != stage_before {
            report.stages_visited.push(new_stage);
            for r in runners.iter_mut() {
                r.env.set_m_succ(new_stage);
            }
        }

        report.metrics.push(MetricsRow {
            update_idx,
            stage_m_succ: stage_before,
            success_rate_100: success_rate,
            mean_episode_len: if ep_count > 0 { ep_len_sum as f64 / ep_count as f64 } else { 0.0 },
            loss_ppo: um.loss_ppo,
            loss_value: um.loss_value,
            entropy: um.entropy,
            loss_step: um.loss_step,
            loss_term: um.loss_term,
            clip_frac: um.clip_frac,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        report.best_success_rate = report.best_success_rate.max(success_rate);
        report.final_success_rate = success_rate;

        if let Some(path) = ckpt_path {
            let periodic = train_cfg.checkpoint_every > 0
                && (update_idx + 1) % train_cfg.checkpoint_every == 0;
            if periodic || update_idx + 1 == train_cfg.total_updates {
                save_checkpoint_atomic(agent, &CheckpointExtras { adam: Some(adam.clone()), rng: None }, path)?;
            }
        }
    }

    // a zero-update run still leaves a loadable artifact behind
    if train_cfg.total_updates == 0 {
        if let Some(path) = ckpt_path {
            save_checkpoint_atomic(agent, &CheckpointExtras { adam: Some(adam.clone()), rng: None }, path)?;
        }
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::env::AugConfig;
    use crate::scene::generate_synthetic_scene;

    fn toy_setup() -> (Arc<SceneModel>, EnvConfig, AgentConfig, TrainConfig) {
        let scene = Arc::new(generate_synthetic_scene(42, 2, 6.0));
        let env_cfg = EnvConfig {
            h: 32,
            w: 32,
            axes: vec![0, 1],
            aug: AugConfig::disabled(),
            max_steps: 64,
            ..EnvConfig::default()
        };
        let agent_cfg = AgentConfig {
            h: 32,
            w: 32,
            enc_channels: vec![6, 8, 16],
            embed_dim: 16,
            head_hidden: 16,
            n_actions: 4,
            freeze_encoder: true,
        };
        let train_cfg = TrainConfig {
            rollout_len: 128,
            minibatch: 32,
            n_envs: 2,
            grad_chunks: 2,
            total_updates: 2,
            curriculum_stages: vec![100.0],
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        (scene, env_cfg, agent_cfg, train_cfg)
    }

    #[test]
    fn smoke_run_writes_one_metrics_row_per_update() {
        let (scene, env_cfg, agent_cfg, train_cfg) = toy_setup();
        let mut agent = Agent::new(agent_cfg, 1).unwrap();
        let report = train_loop(scene, &env_cfg, &mut agent, &train_cfg, None).unwrap();
        assert_eq!(report.metrics.len(), 2);
        let csv = report.metrics_csv();
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn same_seed_gives_identical_metrics_csv() {
        let (scene, env_cfg, agent_cfg, train_cfg) = toy_setup();
        let run = || {
            let mut agent = Agent::new(agent_cfg.clone(), 1).unwrap();
            let report =
                train_loop(Arc::clone(&scene), &env_cfg, &mut agent, &train_cfg, None).unwrap();
            // strip the timing column, the only intentionally
            // nondeterministic field
            report
                .metrics
                .iter()
                .map(|r| {
                    let line = r.to_csv_line();
                    line.rsplit_once(',').unwrap().0.to_string()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_action_space_is_rejected() {
        let (scene, env_cfg, mut agent_cfg, train_cfg) = toy_setup();
        agent_cfg.n_actions = 12;
        let mut agent = Agent::new(agent_cfg, 1).unwrap();
        assert!(matches!(
            train_loop(scene, &env_cfg, &mut agent, &train_cfg, None),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn checkpoint_written_at_end() {
        let (scene, env_cfg, agent_cfg, train_cfg) = toy_setup();
        let dir = std::env::temp_dir().join("rlreg_train_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("final.ckpt");
        let _ = std::fs::remove_file(&path);
        let mut agent = Agent::new(agent_cfg, 1).unwrap();
        train_loop(scene, &env_cfg, &mut agent, &train_cfg, Some(&path)).unwrap();
        let (loaded, extras) = crate::agent::load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config(), agent.config());
        assert!(extras.adam.is_some());
    }
}
