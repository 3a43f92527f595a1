//! Inference with termination-confidence stopping and best-frame fallback,
//! the synthetic threshold-sweep evaluation, landmark registration error,
//! and per-threshold summary statistics.

use crate::agent::{obs_to_tensor, select_action, Agent, SelectMode};
use crate::env::{Granularity, RegEnv};
use crate::obs::{count_visible_structures, Observation};
use crate::se3::{pose_compose, pose_error, pose_inverse, sub3, norm3, Pose, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("initial pose sees no structure (needs at least one visible)")]
    InvalidInitialPose,
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("landmark set is empty")]
    EmptyLandmarks,
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Geom(#[from] crate::se3::GeomError),
}

/// Why inference stopped. `Success` only occurs in synthetic evaluation
/// where the pose error is observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCause {
    Threshold,
    Success,
    StepLimit,
    FallbackBestFrame,
}

impl StopCause {
    pub fn name(self) -> &'static str {
        match self {
            StopCause::Threshold => "threshold",
            StopCause::Success => "success",
            StopCause::StepLimit => "step_limit",
            StopCause::FallbackBestFrame => "fallback_best_frame",
        }
    }
}

/// One per-step trace record (optional output).
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub step_idx: usize,
    pub axis: usize,
    pub sign: i8,
    pub granularity: Granularity,
    pub m: f64,
    pub reward: f64,
    pub term_prob: f64,
    pub done_reason: Option<StopCause>,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub final_pose: Pose,
    pub steps_taken: usize,
    pub stop_cause: StopCause,
    /// Pose error of the returned pose, synthetic evaluation only.
    pub final_m: Option<f64>,
    pub best_term_prob: f64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Inference task over a renderer environment. `tgt_pose`/`m_succ` enable
/// the synthetic success stop and error reporting; on real inputs only the
/// target observation exists and both stay `None`.
pub struct InferenceTask<'a> {
    pub env: &'a RegEnv,
    pub init_pose: Pose,
    pub tgt_obs: &'a Observation,
    pub tgt_pose: Option<Pose>,
    pub m_succ: Option<f64>,
    pub threshold: f64,
    pub max_steps: usize,
    pub record_trace: bool,
}

/// Greedy iterative refinement: step with argmax actions and head-selected
/// granularity, stop once the termination confidence exceeds the
/// threshold (or the synthetic pose error drops below `m_succ`); when the
/// step limit is hit, return the pose of the highest-confidence frame
/// (earliest tie) instead of the last one.
pub fn run_inference(agent: &Agent<f32>, task: &InferenceTask<'_>) -> Result<InferenceResult, InferError> {
    if !(task.threshold > 0.0 && task.threshold < 1.0) {
        return Err(InferError::BadThreshold(task.threshold));
    }
    let env = task.env;
    let cfg = env.config();
    let space = cfg.action_space();
    let mut rng = ChaCha8Rng::seed_from_u64(0); // greedy mode draws nothing

    let init_obs = env.render_observation(&task.init_pose);
    if count_visible_structures(&init_obs, cfg.scaled_min_struct_pixels()) < 1 {
        return Err(InferError::InvalidInitialPose);
    }

    let tgt_tensor = obs_to_tensor::<f32>(task.tgt_obs);
    let feat_tgt = agent.encode_features(&tgt_tensor)?;

    let m_of = |pose: &Pose| -> Result<Option<f64>, InferError> {
        match &task.tgt_pose {
            Some(tgt) => Ok(Some(pose_error(pose, tgt, &env.scene().sample_points)?)),
            None => Ok(None),
        }
    };

    let mut pose = task.init_pose;
    let mut obs = init_obs;
    let mut best_term_prob = f64::NEG_INFINITY;
    let mut best_pose = pose;
    let mut best_step = 0usize;
    let mut trace: Option<Vec<TraceRow>> = if task.record_trace { Some(Vec::new()) } else { None };
    let mut m_prev = m_of(&pose)?;

    for step in 0..task.max_steps {
        // synthetic success stop on the current pose
        if let (Some(m), Some(m_succ)) = (m_prev, task.m_succ) {
            if m < m_succ {
                return Ok(InferenceResult {
                    final_pose: pose,
                    steps_taken: step,
                    stop_cause: StopCause::Success,
                    final_m: Some(m),
                    best_term_prob: best_term_prob.max(0.0),
                    trace,
                });
            }
        }

        let cur_tensor = obs_to_tensor::<f32>(&obs);
        let feat_cur = agent.encode_features(&cur_tensor)?;
        let (out, _) = agent.policy_forward_features(&feat_cur, &feat_tgt)?;
        let term_prob = out.term_prob as f64;
        if term_prob > best_term_prob {
            best_term_prob = term_prob;
            best_pose = pose;
            best_step = step;
        }

        let cmd = select_action(&out, &space, SelectMode::Greedy, &mut rng, task.threshold);
        if cmd.terminate {
            if let Some(t) = trace.as_mut() {
                t.push(TraceRow {
                    step_idx: step,
                    axis: cmd.axis,
                    sign: cmd.sign,
                    granularity: cmd.granularity,
                    m: m_prev.unwrap_or(f64::NAN),
                    reward: 0.0,
                    term_prob,
                    done_reason: Some(StopCause::Threshold),
                });
            }
            return Ok(InferenceResult {
                final_pose: pose,
                steps_taken: step,
                stop_cause: StopCause::Threshold,
                final_m: m_prev,
                best_term_prob: term_prob.max(best_term_prob),
                trace,
            });
        }

        // apply the motion with the empty-view undo from training
        let new_pose = crate::env::apply_action(&pose, &cmd, cfg);
        let new_obs = env.render_observation(&new_pose);
        let undone = new_obs.count_nonzero(crate::obs::CH_LIVER) < cfg.scaled_empty_view_pixels();
        let (m_new, reward);
        if undone {
            m_new = m_prev;
            reward = -1.1;
        } else {
            m_new = m_of(&new_pose)?;
            reward = match (m_prev, m_new) {
                (Some(a), Some(b)) => crate::env::step_reward(a - b),
                _ => 0.0,
            };
            pose = new_pose;
            obs = new_obs;
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                step_idx: step,
                axis: cmd.axis,
                sign: cmd.sign,
                granularity: cmd.granularity,
                m: m_new.unwrap_or(f64::NAN),
                reward,
                term_prob,
                done_reason: None,
            });
        }
        m_prev = m_new;
    }

    // step limit: fall back to the best-confidence frame when it is not
    // the frame we already stand on
    let fell_back = best_step + 1 < task.max_steps && best_pose != pose;
    let (final_pose, cause) = if fell_back {
        (best_pose, StopCause::FallbackBestFrame)
    } else {
        (pose, StopCause::StepLimit)
    };
    let final_m = m_of(&final_pose)?;
    Ok(InferenceResult {
        final_pose,
        steps_taken: task.max_steps,
        stop_cause: cause,
        final_m,
        best_term_prob,
        trace,
    })
}

/// Mean Euclidean landmark displacement under the relative pose between
/// the estimated and ground-truth camera poses, in mm.
pub fn compute_tre(landmarks: &[Vec3], est_pose: &Pose, tgt_pose: &Pose) -> Result<f64, InferError> {
    if landmarks.is_empty() {
        return Err(InferError::EmptyLandmarks);
    }
    let rel = pose_compose(&pose_inverse(tgt_pose), est_pose);
    let sum: f64 = landmarks.iter().map(|&p| norm3(sub3(p, rel.apply(p)))).sum();
    Ok(sum / landmarks.len() as f64)
}

/// One evaluation episode result.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub episode_id: usize,
    pub threshold: f64,
    pub steps: usize,
    pub final_m: f64,
    pub stop_cause: StopCause,
    pub tre: f64,
}

impl EvalRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{:.6}",
            self.episode_id,
            self.threshold,
            self.steps,
            self.final_m,
            self.stop_cause.name(),
            self.tre
        )
    }
}

pub const RESULTS_HEADER: &str = "episode_id,threshold,steps,final_m_mm2,stop_cause,tre_mm";

/// Evaluation pose pairs drawn from the dedicated evaluation stream
/// namespace, disjoint from every training stream for the same seed.
pub fn sample_eval_pairs(
    env: &RegEnv,
    n_pairs: usize,
    seed: u64,
    m_succ_floor: f64,
) -> Result<Vec<(Pose, Pose)>, InferError> {
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::streams::eval_pair(i));
        loop {
            let tgt = env.sample_valid_pose(&mut rng)?;
            let cur = env.sample_valid_pose(&mut rng)?;
            let m0 = pose_error(&cur, &tgt, &env.scene().sample_points)?;
            if m0 >= m_succ_floor {
                pairs.push((tgt, cur));
                break;
            }
        }
    }
    Ok(pairs)
}

/// Run the threshold sweep: the same `n_pairs` pose pairs evaluated at
/// every threshold, in parallel over episodes, rows ordered by
/// `(threshold, episode)`.
pub fn threshold_sweep(
    agent: &Agent<f32>,
    env: &RegEnv,
    n_pairs: usize,
    thresholds: &[f64],
    seed: u64,
    m_succ: f64,
    max_steps: usize,
) -> Result<Vec<EvalRow>, InferError> {
    let pairs = sample_eval_pairs(env, n_pairs, seed, m_succ)?;
    let mut jobs: Vec<(usize, f64, usize)> = Vec::new(); // (row id, threshold, pair)
    for (ti, &th) in thresholds.iter().enumerate() {
        for pi in 0..pairs.len() {
            jobs.push((ti * pairs.len() + pi, th, pi));
        }
    }
    let mut rows: Vec<EvalRow> = jobs
        .par_iter()
        .map(|&(row_id, threshold, pi)| {
            let (tgt_pose, init_pose) = pairs[pi];
            let tgt_obs = env.render_observation(&tgt_pose);
            let task = InferenceTask {
                env,
                init_pose,
                tgt_obs: &tgt_obs,
                tgt_pose: Some(tgt_pose),
                m_succ: Some(m_succ),
                threshold,
                max_steps,
                record_trace: false,
            };
            let res = run_inference(agent, &task)?;
            let tre = compute_tre(&env.scene().landmarks, &res.final_pose, &tgt_pose)?;
            Ok(EvalRow {
                episode_id: row_id,
                threshold,
                steps: res.steps_taken,
                final_m: res.final_m.expect("synthetic eval always has m"),
                stop_cause: res.stop_cause,
                tre,
            })
        })
        .collect::<Result<Vec<_>, InferError>>()?;
    rows.sort_by_key(|r| r.episode_id);
    Ok(rows)
}

/// Per-threshold summary statistics.
#[derive(Debug, Clone)]
pub struct ThresholdStats {
    pub threshold: f64,
    pub mean_m: f64,
    pub median_m: f64,
    pub iqr_m: f64,
    pub frac_below_50: f64,
    pub mean_tre: f64,
    pub median_tre: f64,
}

pub const STATS_HEADER: &str = "threshold,mean_m,median_m,iqr_m,frac_below_50,mean_tre,median_tre";

impl ThresholdStats {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.threshold, self.mean_m, self.median_m, self.iqr_m, self.frac_below_50, self.mean_tre, self.median_tre
        )
    }
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&sorted, 0.5)
}

/// Group rows by threshold and compute summary statistics, ordered by
/// ascending threshold.
pub fn summarize(rows: &[EvalRow]) -> Vec<ThresholdStats> {
    let mut thresholds: Vec<f64> = rows.iter().map(|r| r.threshold).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    thresholds
        .into_iter()
        .map(|th| {
            let ms: Vec<f64> = rows.iter().filter(|r| r.threshold == th).map(|r| r.final_m).collect();
            let tres: Vec<f64> = rows.iter().filter(|r| r.threshold == th).map(|r| r.tre).collect();
            let mut ms_sorted = ms.clone();
            ms_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut tre_sorted = tres.clone();
            tre_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ThresholdStats {
                threshold: th,
                mean_m: ms.iter().sum::<f64>() / ms.len() as f64,
                median_m: quantile_sorted(&ms_sorted, 0.5),
                iqr_m: quantile_sorted(&ms_sorted, 0.75) - quantile_sorted(&ms_sorted, 0.25),
                frac_below_50: ms.iter().filter(|&&m| m < 50.0).count() as f64 / ms.len() as f64,
                mean_tre: tres.iter().sum::<f64>() / tres.len() as f64,
                median_tre: quantile_sorted(&tre_sorted, 0.5),
            }
        })
        .collect()
}

/// Seeded bootstrap confidence interval for `median(b) - median(a)`.
/// Returns `(lo, hi)` at the given confidence level.
pub fn bootstrap_median_diff_ci(
    a: &[f64],
    b: &[f64],
    n_boot: usize,
    seed: u64,
    confidence: f64,
) -> (f64, f64) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(n_boot);
    let resample = |src: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..src.len()).map(|_| src[rng.random_range(0..src.len())]).collect()
    };
    for _ in 0..n_boot {
        let ra = resample(a, &mut rng);
        let rb = resample(b, &mut rng);
        diffs.push(median(&rb) - median(&ra));
    }
    diffs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let alpha = (1.0 - confidence) / 2.0;
    (quantile_sorted(&diffs, alpha), quantile_sorted(&diffs, 1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AugConfig, EnvConfig};
    use crate::scene::generate_synthetic_scene;
    use crate::se3::{rot_z, se3_exp, Twist};
    use std::sync::Arc;

    fn small_env() -> RegEnv {
        let scene = Arc::new(generate_synthetic_scene(42, 2, 6.0));
        let cfg = EnvConfig { h: 32, w: 32, aug: AugConfig::disabled(), ..EnvConfig::default() };
        RegEnv::new(scene, cfg).unwrap()
    }

    #[test]
    fn tre_identity_and_translation() {
        let lm = vec![[10.0, 0.0, 0.0], [0.0, 10.0, 5.0]];
        let p = Pose::IDENTITY;
        assert_eq!(compute_tre(&lm, &p, &p).unwrap(), 0.0);
        let est = Pose::from_translation([3.0, 4.0, 0.0]);
        let tre = compute_tre(&lm, &est, &Pose::IDENTITY).unwrap();
        assert!((tre - 5.0).abs() < 1e-12);
        assert!(matches!(compute_tre(&[], &p, &p), Err(InferError::EmptyLandmarks)));
    }

    #[test]
    fn tre_squared_never_exceeds_pose_error() {
        // Jensen: (mean |d|)^2 <= mean |d|^2 over the same point set
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let points: Vec<Vec3> = (0..16)
            .map(|_| {
                [
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                ]
            })
            .collect();
        for _ in 0..50 {
            let xi = Twist::new(
                [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
                [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            );
            let est = se3_exp(&xi);
            let tre = compute_tre(&points, &est, &Pose::IDENTITY).unwrap();
            let m = pose_error(&est, &Pose::IDENTITY, &points).unwrap();
            assert!(tre * tre <= m + 1e-9, "tre^2 {} > m {}", tre * tre, m);
        }
    }

    #[test]
    fn tre_zero_iff_identity_on_landmarks() {
        let lm = vec![[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]];
        let est = Pose::new(rot_z(0.2), [1.0, 0.0, 0.0]);
        assert!(compute_tre(&lm, &est, &Pose::IDENTITY).unwrap() > 0.0);
    }

    #[test]
    fn invalid_initial_pose_is_rejected() {
        let env = small_env();
        let agent = crate::agent::Agent::<f32>::new(
            crate::agent::AgentConfig {
                h: 32,
                w: 32,
                enc_channels: vec![6, 8],
                embed_dim: 8,
                head_hidden: 8,
                n_actions: 12,
                freeze_encoder: true,
            },
            1,
        )
        .unwrap();
        // a pose translated far off-axis sees nothing
        let mut bad = env.reference_pose();
        bad.t[0] += 100_000.0;
        let tgt_pose = env.reference_pose();
        let tgt_obs = env.render_observation(&tgt_pose);
        let task = InferenceTask {
            env: &env,
            init_pose: bad,
            tgt_obs: &tgt_obs,
            tgt_pose: Some(tgt_pose),
            m_succ: Some(10.0),
            threshold: 0.8,
            max_steps: 16,
            record_trace: false,
        };
        assert!(matches!(run_inference(&agent, &task), Err(InferError::InvalidInitialPose)));
        let bad_threshold = InferenceTask { threshold: 1.5, init_pose: env.reference_pose(), ..task };
        assert!(matches!(run_inference(&agent, &bad_threshold), Err(InferError::BadThreshold(_))));
    }

    #[test]
    fn fallback_returns_best_confidence_frame() {
        // an untrained agent never crosses a high threshold; the result
        // must come from the argmax-confidence step, not the last step
        let env = small_env();
        let agent = crate::agent::Agent::<f32>::new(
            crate::agent::AgentConfig {
                h: 32,
                w: 32,
                enc_channels: vec![6, 8],
                embed_dim: 8,
                head_hidden: 8,
                n_actions: 12,
                freeze_encoder: true,
            },
            2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tgt_pose = env.sample_valid_pose(&mut rng).unwrap();
        let init_pose = env.sample_valid_pose(&mut rng).unwrap();
        let tgt_obs = env.render_observation(&tgt_pose);
        let task = InferenceTask {
            env: &env,
            init_pose,
            tgt_obs: &tgt_obs,
            tgt_pose: Some(tgt_pose),
            m_succ: Some(1e-9), // unreachable: success stop disabled in practice
            threshold: 0.999999,
            max_steps: 24,
            record_trace: true,
        };
        let res = run_inference(&agent, &task).unwrap();
        assert!(matches!(res.stop_cause, StopCause::FallbackBestFrame | StopCause::StepLimit));
        assert_eq!(res.steps_taken, 24);
        assert!(res.best_term_prob < 0.999999);
        let trace = res.trace.unwrap();
        assert_eq!(trace.len(), 24);
        // no traced step may exceed the threshold when we fell back
        for row in &trace {
            assert!(row.term_prob <= 0.999999);
        }
    }

    #[test]
    fn sweep_produces_rows_per_pair_per_threshold_and_is_deterministic() {
        let env = small_env();
        let agent = crate::agent::Agent::<f32>::new(
            crate::agent::AgentConfig {
                h: 32,
                w: 32,
                enc_channels: vec![6, 8],
                embed_dim: 8,
                head_hidden: 8,
                n_actions: 12,
                freeze_encoder: true,
            },
            3,
        )
        .unwrap();
        let thresholds = [0.5, 0.7, 0.9];
        let rows = threshold_sweep(&agent, &env, 4, &thresholds, 11, 10.0, 12).unwrap();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            assert!(thresholds.contains(&r.threshold));
        }
        let rows2 = threshold_sweep(&agent, &env, 4, &thresholds, 11, 10.0, 12).unwrap();
        let csv = |rs: &[EvalRow]| rs.iter().map(|r| r.to_csv_line()).collect::<Vec<_>>().join("\n");
        assert_eq!(csv(&rows), csv(&rows2));
    }

    #[test]
    fn summarize_single_row_and_ordering() {
        let row = EvalRow {
            episode_id: 0,
            threshold: 0.8,
            steps: 10,
            final_m: 42.0,
            stop_cause: StopCause::Threshold,
            tre: 3.0,
        };
        let stats = summarize(&[row]);
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].mean_m, 42.0);
        assert_eq!(stats[0].median_m, 42.0);
        assert_eq!(stats[0].frac_below_50, 1.0);
    }

    #[test]
    fn quantiles_and_bootstrap_behave() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&vals), 2.5);
        assert_eq!(quantile_sorted(&vals, 0.0), 1.0);
        assert_eq!(quantile_sorted(&vals, 1.0), 4.0);
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| i as f64 + 10.0).collect();
        let (lo, hi) = bootstrap_median_diff_ci(&a, &b, 500, 7, 0.95);
        assert!(lo > 0.0, "shifted medians must give a positive CI, got ({lo}, {hi})");
        let (lo2, hi2) = bootstrap_median_diff_ci(&a, &a, 500, 7, 0.95);
        assert!(lo2 <= 0.0 && hi2 >= 0.0);
    }
}
