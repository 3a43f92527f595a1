//! The sequential pose-refinement environment: episode lifecycle, discrete
//! SE(3) actions with the empty-view undo, reward shaping with a final
//! bonus, success-threshold curriculum, and target-view augmentation.

mod aug;
mod curriculum;

pub use aug::{augment_target, AugConfig};
pub use curriculum::Curriculum;

use crate::camera::{scale_intrinsics, CameraIntrinsics};
use crate::obs::{assemble_observation, count_visible_structures, Observation, CH_LIVER};
use crate::raster::rasterize;
use crate::scene::SceneModel;
use crate::se3::{pose_compose, pose_error, rot_x, se3_exp, Pose, Twist};
use rand::Rng;
use std::sync::Arc;
use thiserror::Error;

/// Labels for the step-mode head: coarse above this pose error (mm^2).
pub const STEP_MODE_LABEL_THRESHOLD: f64 = 200.0;
/// Labels for the termination head: positive below this pose error (mm^2).
pub const TERM_LABEL_THRESHOLD: f64 = 50.0;
/// Reference reso for the pixel-count thresholds in [`EnvConfig`].
pub const REFERENCE_RES: f64 = 128.0 * 128.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("no valid pose found after {0} attempts; scene or config is degenerate")]
    RetryExhausted(usize),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("reset must be called before step")]
    NotReset,
    #[error(transparent)]
    Geom(#[from] crate::se3::GeomError),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
}

/// Step granularity selected per action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Coarse,
    Fine,
}

/// One discrete command: a signed single-axis motion at some granularity,
/// or an exclusive terminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionCommand {
    /// 0-2 translation x/y/z, 3-5 rotation about x/y/z.
    pub axis: usize,
    /// +1 or -1.
    pub sign: i8,
    pub granularity: Granularity,
    /// When set, no motion is applied and the episode ends.
    pub terminate: bool,
}

/// The enabled subset of the six axes, defining the discrete action set
/// (two signed actions per axis). The full space has 12 actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    axes: Vec<usize>,
}

impl ActionSpace {
    pub fn new(axes: Vec<usize>) -> Self {
        assert!(!axes.is_empty() && axes.iter().all(|&a| a < 6), "axes must be in 0..6");
        ActionSpace { axes }
    }

    pub fn full() -> Self {
        ActionSpace { axes: (0..6).collect() }
    }

    pub fn n_actions(&self) -> usize {
        2 * self.axes.len()
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    /// Map an actor index to a command: even indices are `+`, odd are `-`.
    pub fn decode(&self, index: usize, granularity: Granularity, terminate: bool) -> ActionCommand {
        let axis = self.axes[index / 2];
        let sign = if index % 2 == 0 { 1 } else { -1 };
        ActionCommand { axis, sign, granularity, terminate }
    }

    /// Inverse of [`ActionSpace::decode`] for buffer storage.
    pub fn encode(&self, cmd: &ActionCommand) -> usize {
        let pos = self.axes.iter().position(|&a| a == cmd.axis).expect("axis not in action space");
        2 * pos + usize::from(cmd.sign < 0)
    }
}

/// Environment configuration. Pixel-count thresholds (`empty_view_pixels`,
/// `min_struct_pixels`) are stated at the 128x128 reference resolution and
/// scaled by area; angle fields are radians internally.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub h: usize,
    pub w: usize,
    /// Base intrinsics, scaled to `(w, h)` for rendering.
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub base_w: u32,
    pub base_h: u32,
    pub coarse_step_t: f64,
    pub fine_step_t: f64,
    pub coarse_step_r: f64,
    pub fine_step_r: f64,
    pub m_succ: f64,
    pub max_steps: usize,
    pub beta: f64,
    pub eps: f64,
    pub empty_view_pixels: usize,
    pub rot_range: f64,
    pub trans_range: f64,
    pub min_structures: usize,
    pub min_struct_pixels: usize,
    pub fov_mask: bool,
    /// Enabled motion axes; the action set is two signed actions per axis.
    pub axes: Vec<usize>,
    pub clip_percentiles: Option<(f64, f64)>,
    pub aug: AugConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            h: 128,
            w: 128,
            fx: 460.0,
            fy: 460.0,
            cx: 256.0,
            cy: 256.0,
            base_w: 512,
            base_h: 512,
            coarse_step_t: 5.0,
            fine_step_t: 1.0,
            coarse_step_r: 2f64.to_radians(),
            fine_step_r: 0.5f64.to_radians(),
            m_succ: 500.0,
            max_steps: 256,
            beta: 10.0,
            eps: 1e-6,
            empty_view_pixels: 16,
            rot_range: 20f64.to_radians(),
            trans_range: 50.0,
            min_structures: 2,
            min_struct_pixels: 20,
            fov_mask: false,
            axes: (0..6).collect(),
            clip_percentiles: None,
            aug: AugConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.axes.clone())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, crate::camera::CameraError> {
        let base = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.base_w, self.base_h)?;
        Ok(scale_intrinsics(&base, self.w as u32, self.h as u32))
    }

    fn area_scaled(&self, count: usize) -> usize {
        let scaled = (count as f64 * (self.h * self.w) as f64 / REFERENCE_RES).round() as usize;
        scaled.max(1)
    }

    pub fn scaled_empty_view_pixels(&self) -> usize {
        self.area_scaled(self.empty_view_pixels)
    }

    pub fn scaled_min_struct_pixels(&self) -> usize {
        self.area_scaled(self.min_struct_pixels)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.coarse_step_t > self.fine_step_t && self.fine_step_t > 0.0) {
            return Err("coarse_step_t > fine_step_t > 0 required".into());
        }
        if !(self.coarse_step_r > self.fine_step_r && self.fine_step_r > 0.0) {
            return Err("coarse_step_r > fine_step_r > 0 required".into());
        }
        if self.max_steps < 1 {
            return Err("max_steps >= 1 required".into());
        }
        if !(self.m_succ > 0.0) {
            return Err("m_succ > 0 required".into());
        }
        if self.axes.is_empty() || self.axes.iter().any(|&a| a >= 6) {
            return Err("axes must be a non-empty subset of 0..6".into());
        }
        Ok(())
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoneReason {
    Success,
    StepLimit,
    EmptyView,
    PolicyTerminate,
}

impl DoneReason {
    pub fn name(self) -> &'static str {
        match self {
            DoneReason::Success => "success",
            DoneReason::StepLimit => "term_limit",
            DoneReason::EmptyView => "empty_view",
            DoneReason::PolicyTerminate => "policy_terminate",
        }
    }
}

/// Live episode bookkeeping.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub pose_cur: Pose,
    pub pose_tgt: Pose,
    pub obs_tgt: Arc<Observation>,
    pub obs_cur: Arc<Observation>,
    pub m_prev: f64,
    pub m0: f64,
    pub step_idx: usize,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Arc<Observation>,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    /// Pose error after the step, mm^2.
    pub m: f64,
    pub aux_step_label: Granularity,
    pub aux_term_label: bool,
    /// True when the action emptied the view and was reverted.
    pub undone: bool,
}

/// Step reward of the pose-error improvement `delta_m = m_prev - m`:
/// `+1` for improvement, `-1.1` for regression, `0` for no change.
pub fn step_reward(delta_m: f64) -> f64 {
    if delta_m > 0.0 {
        1.0
    } else if delta_m < 0.0 {
        -1.1
    } else {
        0.0
    }
}

/// Final bonus `beta * max(0, (m0 - mT) / (m0 + eps))`, bounded in `[0, beta]`.
pub fn final_bonus(m0: f64, m_t: f64, beta: f64, eps: f64) -> f64 {
    beta * ((m0 - m_t) / (m0 + eps)).max(0.0)
}

/// Auxiliary supervision labels from the current pose error: step mode is
/// coarse above 200 mm^2, the termination label is positive below 50 mm^2.
pub fn aux_labels(m: f64) -> (Granularity, bool) {
    let mode = if m > STEP_MODE_LABEL_THRESHOLD { Granularity::Coarse } else { Granularity::Fine };
    (mode, m < TERM_LABEL_THRESHOLD)
}

/// Build the single-axis camera-frame twist for a command and left-compose
/// it onto the pose.
pub fn apply_action(pose: &Pose, a: &ActionCommand, cfg: &EnvConfig) -> Pose {
    let mut xi = Twist::ZERO;
    let sign = f64::from(a.sign);
    if a.axis < 3 {
        let step = match a.granularity {
            Granularity::Coarse => cfg.coarse_step_t,
            Granularity::Fine => cfg.fine_step_t,
        };
        xi.v[a.axis] = sign * step;
    } else {
        let step = match a.granularity {
            Granularity::Coarse => cfg.coarse_step_r,
            Granularity::Fine => cfg.fine_step_r,
        };
        xi.omega[a.axis - 3] = sign * step;
    }
    pose_compose(&se3_exp(&xi), pose)
}

/// The registration environment. One instance is single-threaded; run
/// several instances (sharing the scene read-only) for parallel rollout.
#[derive(Debug, Clone)]
pub struct RegEnv {
    scene: Arc<SceneModel>,
    cfg: EnvConfig,
    k: CameraIntrinsics,
    ref_pose: Pose,
    state: Option<EpisodeState>,
}

const SAMPLE_RETRIES: usize = 1000;

impl RegEnv {
    pub fn new(scene: Arc<SceneModel>, cfg: EnvConfig) -> Result<Self, EnvError> {
        let k = cfg.intrinsics()?;
        let ref_pose = reference_pose(&scene);
        Ok(RegEnv { scene, cfg, k, ref_pose, state: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &SceneModel {
        &self.scene
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.k
    }

    pub fn reference_pose(&self) -> Pose {
        self.ref_pose
    }

    pub fn state(&self) -> Option<&EpisodeState> {
        self.state.as_ref()
    }

    /// Update the curriculum-controlled success threshold.
    pub fn set_m_succ(&mut self, m_succ: f64) {
        self.cfg.m_succ = m_succ;
    }

    /// Render the six-channel observation at a pose (no augmentation).
    pub fn render_observation(&self, pose: &Pose) -> Observation {
        let buf = rasterize(&self.scene, pose, &self.k);
        assemble_observation(&buf, &self.scene, self.cfg.clip_percentiles)
    }

    /// Draw a pose around the reference until at least `min_structures`
    /// structures are visible; errors after a bounded number of retries.
    pub fn sample_valid_pose<R: Rng>(&self, rng: &mut R) -> Result<Pose, EnvError> {
        for _ in 0..SAMPLE_RETRIES {
            let mut xi = Twist::ZERO;
            for &axis in &self.cfg.axes {
                if axis < 3 {
                    if self.cfg.trans_range > 0.0 {
                        xi.v[axis] = rng.random_range(-self.cfg.trans_range..self.cfg.trans_range);
                    }
                } else if self.cfg.rot_range > 0.0 {
                    xi.omega[axis - 3] = rng.random_range(-self.cfg.rot_range..self.cfg.rot_range);
                }
            }
            let pose = pose_compose(&se3_exp(&xi), &self.ref_pose);
            let obs = self.render_observation(&pose);
            if count_visible_structures(&obs, self.cfg.scaled_min_struct_pixels()) >= self.cfg.min_structures {
                return Ok(pose);
            }
        }
        Err(EnvError::RetryExhausted(SAMPLE_RETRIES))
    }

    /// Start a new episode: independent target/initial poses (pairs already
    /// below the success threshold are re-sampled), the target observation
    /// rendered and augmented once, the current observation rendered.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Result<(Arc<Observation>, Arc<Observation>), EnvError> {
        for _ in 0..SAMPLE_RETRIES {
            let pose_tgt = self.sample_valid_pose(rng)?;
            let pose_cur = self.sample_valid_pose(rng)?;
            let m0 = pose_error(&pose_cur, &pose_tgt, &self.scene.sample_points)?;
            if m0 < self.cfg.m_succ {
                continue; // solved at birth; would corrupt success statistics
            }
            let obs_tgt = Arc::new(augment_target(&self.render_observation(&pose_tgt), rng, &self.cfg));
            let obs_cur = Arc::new(self.render_observation(&pose_cur));
            self.state = Some(EpisodeState {
                pose_cur,
                pose_tgt,
                obs_tgt: Arc::clone(&obs_tgt),
                obs_cur: Arc::clone(&obs_cur),
                m_prev: m0,
                m0,
                step_idx: 0,
                done: false,
                done_reason: None,
            });
            return Ok((obs_cur, obs_tgt));
        }
        Err(EnvError::RetryExhausted(SAMPLE_RETRIES))
    }

    /// Advance the episode by one command. See [`StepOutcome`].
    pub fn step(&mut self, a: &ActionCommand) -> Result<StepOutcome, EnvError> {
        let cfg = self.cfg.clone();
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if state.done {
            return Err(EnvError::EpisodeDone);
        }

        let mut undone = false;
        let mut reward;
        let m;

        if a.terminate {
            // exclusive terminate: no motion, step reward 0 plus the bonus
            m = state.m_prev;
            state.done = true;
            state.done_reason = Some(DoneReason::PolicyTerminate);
            reward = final_bonus(state.m0, m, cfg.beta, cfg.eps);
            state.step_idx += 1;
        } else {
            let new_pose = apply_action(&state.pose_cur, a, &cfg);
            let buf = rasterize(&self.scene, &new_pose, &self.k);
            let obs_new = assemble_observation(&buf, &self.scene, cfg.clip_percentiles);
            let liver_px = obs_new.count_nonzero(CH_LIVER);

            if liver_px < cfg.scaled_empty_view_pixels() {
                // undo: revert the motion, keep the previous observation
                // (identical to a re-render of the reverted pose), penalize
                undone = true;
                m = state.m_prev;
                reward = -1.1;
            } else {
                m = pose_error(&new_pose, &state.pose_tgt, &self.scene.sample_points)?;
                reward = step_reward(state.m_prev - m);
                state.pose_cur = new_pose;
                state.obs_cur = Arc::new(obs_new);
                state.m_prev = m;
            }

            state.step_idx += 1;
            if !undone && m < cfg.m_succ {
                state.done = true;
                state.done_reason = Some(DoneReason::Success);
                reward += final_bonus(state.m0, m, cfg.beta, cfg.eps);
            } else if state.step_idx >= cfg.max_steps {
                state.done = true;
                state.done_reason = Some(DoneReason::StepLimit);
                reward += final_bonus(state.m0, m, cfg.beta, cfg.eps);
            }
        }

        let (aux_step_label, aux_term_label) = aux_labels(m);
        Ok(StepOutcome {
            obs: Arc::clone(&state.obs_cur),
            reward,
            done: state.done,
            done_reason: state.done_reason,
            m,
            aux_step_label,
            aux_term_label,
            undone,
        })
    }
}

/// Deterministic reference pose: the camera sits on the model's +z side at
/// 2.5x the bounding radius, looking back at the centroid (`R = rot_x(pi)`).
pub fn reference_pose(scene: &SceneModel) -> Pose {
    let c = scene.centroid();
    let d = 2.5 * scene.bounding_radius();
    let r = rot_x(std::f64::consts::PI);
    let cam_pos = [c[0], c[1], c[2] + d];
    // p_cam = R (p - cam_pos) => t = -R cam_pos
    let t = crate::se3::scale3(crate::se3::mat_vec(&r, cam_pos), -1.0);
    Pose { r, t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::generate_synthetic_scene;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> EnvConfig {
        EnvConfig {
            h: 64,
            w: 64,
            aug: AugConfig::disabled(),
            ..EnvConfig::default()
        }
    }

    fn make_env(cfg: EnvConfig) -> RegEnv {
        let scene = Arc::new(generate_synthetic_scene(42, 2, 6.0));
        RegEnv::new(scene, cfg).unwrap()
    }

    #[test]
    fn reference_pose_sees_all_structures() {
        let env = make_env(small_cfg());
        let obs = env.render_observation(&env.reference_pose());
        assert_eq!(
            count_visible_structures(&obs, env.config().scaled_min_struct_pixels()),
            4
        );
    }

    #[test]
    fn step_reward_matches_sign_table() {
        assert_eq!(step_reward(5.0), 1.0);
        assert_eq!(step_reward(-0.01), -1.1);
        assert_eq!(step_reward(0.0), 0.0);
    }

    #[test]
    fn final_bonus_clamps_and_bounds() {
        assert!((final_bonus(100.0, 0.0, 1.0, 1e-6) - 100.0 / (100.0 + 1e-6)).abs() < 1e-12);
        assert_eq!(final_bonus(100.0, 150.0, 1.0, 1e-6), 0.0);
        assert_eq!(final_bonus(0.0, 5.0, 1.0, 1e-6), 0.0);
        assert_eq!(final_bonus(0.0, 0.0, 1.0, 1e-6), 0.0);
        for (m0, mt) in [(500.0, 3.0), (50.0, 49.0), (1e6, 0.0)] {
            let b = final_bonus(m0, mt, 10.0, 1e-6);
            assert!((0.0..=10.0).contains(&b));
        }
    }

    #[test]
    fn aux_labels_match_thresholds() {
        assert_eq!(aux_labels(250.0), (Granularity::Coarse, false));
        assert_eq!(aux_labels(100.0), (Granularity::Fine, false));
        assert_eq!(aux_labels(30.0), (Granularity::Fine, true));
    }

    #[test]
    fn apply_action_builds_single_axis_twists() {
        let cfg = small_cfg();
        let a = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Fine, terminate: false };
        let p = apply_action(&Pose::IDENTITY, &a, &cfg);
        assert_eq!(p.t, [1.0, 0.0, 0.0]);

        // inverse fine steps cancel
        let b = ActionCommand { axis: 0, sign: -1, granularity: Granularity::Fine, terminate: false };
        let back = apply_action(&apply_action(&Pose::IDENTITY, &a, &cfg), &b, &cfg);
        assert!(back.t.iter().all(|v| v.abs() < 1e-12));

        // coarse rotation about z is exactly 2 degrees
        let rz = ActionCommand { axis: 5, sign: 1, granularity: Granularity::Coarse, terminate: false };
        let p = apply_action(&Pose::IDENTITY, &rz, &cfg);
        let xi = crate::se3::se3_log(&p);
        assert!((xi.angle() - 2f64.to_radians()).abs() < 1e-9);
        assert!(xi.omega[2] > 0.0);
    }

    #[test]
    fn action_space_round_trip() {
        let space = ActionSpace::full();
        assert_eq!(space.n_actions(), 12);
        for k in 0..12 {
            let cmd = space.decode(k, Granularity::Coarse, false);
            assert_eq!(space.encode(&cmd), k);
        }
        let toy = ActionSpace::new(vec![0, 1]);
        assert_eq!(toy.n_actions(), 4);
        assert_eq!(toy.decode(3, Granularity::Fine, false).axis, 1);
        assert_eq!(toy.decode(3, Granularity::Fine, false).sign, -1);
    }

    #[test]
    fn sampled_poses_are_valid_and_deterministic() {
        let env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let pose = env.sample_valid_pose(&mut rng).unwrap();
            let obs = env.render_observation(&pose);
            assert!(
                count_visible_structures(&obs, env.config().scaled_min_struct_pixels())
                    >= env.config().min_structures
            );
        }
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut env2 = make_env(small_cfg());
            let _ = env2.reset(&mut rng).unwrap();
            env2.state().unwrap().m0
        };
        assert_eq!(seq(7), seq(7));
    }

    #[test]
    fn zero_ranges_return_reference_pose() {
        let mut cfg = small_cfg();
        cfg.trans_range = 0.0;
        cfg.rot_range = 0.0;
        let env = make_env(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = env.sample_valid_pose(&mut rng).unwrap();
        let d = crate::se3::sub3(pose.t, env.reference_pose().t);
        assert!(crate::se3::norm3(d) < 1e-12);
    }

    #[test]
    fn reset_establishes_consistent_error() {
        let mut env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        env.reset(&mut rng).unwrap();
        let st = env.state().unwrap();
        let m = pose_error(&st.pose_cur, &st.pose_tgt, &env.scene().sample_points).unwrap();
        assert_eq!(st.m_prev, m);
        assert_eq!(st.m0, m);
        assert!(st.m0 >= env.config().m_succ);
    }

    #[test]
    fn target_observation_is_cached_across_steps() {
        let mut env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (_, tgt0) = env.reset(&mut rng).unwrap();
        let a = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Fine, terminate: false };
        env.step(&a).unwrap();
        let st = env.state().unwrap();
        assert!(Arc::ptr_eq(&st.obs_tgt, &tgt0));
    }

    #[test]
    fn improving_and_worsening_actions_get_signed_rewards() {
        let mut env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        env.reset(&mut rng).unwrap();
        // probe both signs of the x axis; exactly one must improve unless
        // the view empties (excluded by the seed choice here)
        let plus = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Fine, terminate: false };
        let o1 = env.step(&plus).unwrap();
        assert!(!o1.undone);
        if o1.reward >= 1.0 {
            assert!(o1.m < env.state().unwrap().m0);
        } else {
            assert!((o1.reward - -1.1).abs() < 1e-12);
        }
    }

    #[test]
    fn bookkeeping_matches_recomputed_error_after_each_step() {
        let mut env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        env.reset(&mut rng).unwrap();
        let space = ActionSpace::full();
        for k in 0..24 {
            if env.state().unwrap().done {
                break;
            }
            let cmd = space.decode(k % 12, Granularity::Coarse, false);
            let out = env.step(&cmd).unwrap();
            let st = env.state().unwrap();
            let recomputed =
                pose_error(&st.pose_cur, &st.pose_tgt, &env.scene().sample_points).unwrap();
            assert_eq!(st.m_prev, recomputed);
            assert_eq!(out.m, recomputed);
        }
    }

    #[test]
    fn terminate_action_ends_episode_with_bonus_only() {
        let mut env = make_env(small_cfg());
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        env.reset(&mut rng).unwrap();
        let cmd = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Fine, terminate: true };
        let out = env.step(&cmd).unwrap();
        assert!(out.done);
        assert_eq!(out.done_reason, Some(DoneReason::PolicyTerminate));
        // m unchanged implies zero improvement, so the reward is the bonus
        // alone, which is zero here
        assert_eq!(out.reward, 0.0);
        assert!(matches!(env.step(&cmd), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn undo_reverts_pose_bitwise() {
        // drive the camera away until the view empties; the pose must be
        // bitwise identical before and after the undone step
        let mut cfg = small_cfg();
        cfg.max_steps = 100_000;
        cfg.m_succ = 1e-12; // never succeed
        let mut env = make_env(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        env.reset(&mut rng).unwrap();
        let away = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Coarse, terminate: false };
        let mut saw_undo = false;
        for _ in 0..400 {
            let before = env.state().unwrap().pose_cur;
            let out = env.step(&away).unwrap();
            if out.undone {
                let after = env.state().unwrap().pose_cur;
                assert_eq!(before, after);
                assert_eq!(out.reward, -1.1);
                saw_undo = true;
                break;
            }
        }
        assert!(saw_undo, "x drift never emptied the view");
    }

    #[test]
    fn step_limit_terminates_episode() {
        let mut cfg = small_cfg();
        cfg.max_steps = 3;
        let mut env = make_env(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        env.reset(&mut rng).unwrap();
        let plus = ActionCommand { axis: 0, sign: 1, granularity: Granularity::Fine, terminate: false };
        let minus = ActionCommand { axis: 0, sign: -1, granularity: Granularity::Fine, terminate: false };
        let mut last = None;
        for i in 0..3 {
            let cmd = if i % 2 == 0 { &plus } else { &minus };
            last = Some(env.step(cmd).unwrap());
        }
        let out = last.unwrap();
        assert!(out.done);
        assert!(matches!(out.done_reason, Some(DoneReason::StepLimit) | Some(DoneReason::Success)));
        assert!(env.state().unwrap().step_idx <= 3);
    }

    #[test]
    fn resets_with_same_seed_are_identical() {
        let run = |seed: u64| {
            let mut env = make_env(small_cfg());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (cur, tgt) = env.reset(&mut rng).unwrap();
            (env.state().unwrap().m0, cur.data.clone(), tgt.data.clone())
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}
