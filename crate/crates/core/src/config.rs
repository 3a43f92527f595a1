//! Sectioned `key = value` run configuration covering the environment,
//! agent, trainer, and evaluation. Unknown sections or keys are errors.
//!
//! Angle-valued keys (`coarse_step_r`, `fine_step_r`, `rot_range`) are
//! written in degrees in the file and converted to radians on load. The
//! scene comes from the `scene` key in `[env]`: either a file path or
//! `gen:<seed>:<subdiv>:<bump>` for a generated mesh.

use crate::agent::AgentConfig;
use crate::env::{AugConfig, EnvConfig};
use crate::ppo::TrainConfig;
use crate::scene::{generate_synthetic_scene, load_scene, SceneModel};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("[{section}] unknown key {key:?}")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("[{section}] {key}: {msg}")]
    BadValue { section: String, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("no scene configured: set `scene = <path>` or `scene = gen:<seed>:<subdiv>:<bump>` in [env]")]
    NoScene,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}

/// Where the scene mesh comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSpec {
    File(PathBuf),
    Generate { seed: u64, subdiv: u32, bump: f64 },
}

impl SceneSpec {
    pub fn parse(value: &str) -> Result<Self, String> {
        if let Some(rest) = value.strip_prefix("gen:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err("expected gen:<seed>:<subdiv>:<bump>".into());
            }
            Ok(SceneSpec::Generate {
                seed: parts[0].parse().map_err(|e| format!("seed: {e}"))?,
                subdiv: parts[1].parse().map_err(|e| format!("subdiv: {e}"))?,
                bump: parts[2].parse().map_err(|e| format!("bump: {e}"))?,
            })
        } else {
            Ok(SceneSpec::File(PathBuf::from(value)))
        }
    }

    pub fn load(&self) -> Result<SceneModel, ConfigError> {
        match self {
            SceneSpec::File(path) => Ok(load_scene(path)?),
            SceneSpec::Generate { seed, subdiv, bump } => Ok(generate_synthetic_scene(*seed, *subdiv, *bump)),
        }
    }
}

/// Evaluation settings (`[eval]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_pairs: usize,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    /// Default termination-confidence threshold for single inference runs.
    pub term_threshold: f64,
    /// Synthetic success stop; defaults to the final curriculum stage.
    pub m_succ: f64,
    pub max_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_pairs: 200,
            thresholds: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            seed: 10_000,
            term_threshold: 0.8,
            m_succ: 10.0,
            max_steps: 256,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: Option<SceneSpec>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: None,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{e}")))
        .collect()
}

/// `0.5:0.9:0.1` sweeps inclusive; a comma list is accepted as well.
pub fn parse_thresholds(value: &str) -> Result<Vec<f64>, String> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return Err("expected start:end:step".into());
        }
        let start: f64 = parts[0].parse().map_err(|e| format!("start: {e}"))?;
        let end: f64 = parts[1].parse().map_err(|e| format!("end: {e}"))?;
        let step: f64 = parts[2].parse().map_err(|e| format!("step: {e}"))?;
        if step <= 0.0 || end < start {
            return Err("need step > 0 and end >= start".into());
        }
        let mut out = Vec::new();
        let mut t = start;
        while t <= end + 1e-9 {
            out.push((t * 1e9).round() / 1e9);
            t += step;
        }
        Ok(out)
    } else {
        parse_list(value)
    }
}

fn parse_axes(value: &str) -> Result<Vec<usize>, String> {
    let names = ["tx", "ty", "tz", "rx", "ry", "rz"];
    value
        .split(',')
        .map(|s| {
            let s = s.trim();
            names
                .iter()
                .position(|n| *n == s)
                .ok_or_else(|| format!("unknown axis {s:?}, expected one of {names:?}"))
        })
        .collect()
}

macro_rules! setv {
    ($field:expr, $value:expr, $section:expr, $key:expr) => {
        $field = $value.parse().map_err(|e| ConfigError::BadValue {
            section: $section.to_string(),
            key: $key.to_string(),
            msg: format!("{e}"),
        })?
    };
}

/// Parse a run configuration from text. Every key is validated; the agent
/// section inherits resolution and action count from the environment.
pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut clip_lo: Option<f64> = None;
    let mut clip_hi: Option<f64> = None;
    let mut section = String::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or(ConfigError::Parse { line: line_no, msg: "unterminated section header".into() })?;
            if !["env", "agent", "train", "eval"].contains(&name) {
                return Err(ConfigError::UnknownSection(name.to_string()));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Parse { line: line_no, msg: format!("expected key = value, got {line:?}") })?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(ConfigError::Parse { line: line_no, msg: "key before any section header".into() });
        }

        let bad = |msg: String| ConfigError::BadValue { section: section.clone(), key: key.to_string(), msg };

        match (section.as_str(), key) {
            ("env", "scene") => cfg.scene = Some(SceneSpec::parse(value).map_err(bad)?),
            ("env", "h") => setv!(cfg.env.h, value, section, key),
            ("env", "w") => setv!(cfg.env.w, value, section, key),
            ("env", "fx") => setv!(cfg.env.fx, value, section, key),
            ("env", "fy") => setv!(cfg.env.fy, value, section, key),
            ("env", "cx") => setv!(cfg.env.cx, value, section, key),
            ("env", "cy") => setv!(cfg.env.cy, value, section, key),
            ("env", "base_w") => setv!(cfg.env.base_w, value, section, key),
            ("env", "base_h") => setv!(cfg.env.base_h, value, section, key),
            ("env", "coarse_step_t") => setv!(cfg.env.coarse_step_t, value, section, key),
            ("env", "fine_step_t") => setv!(cfg.env.fine_step_t, value, section, key),
            ("env", "coarse_step_r") => {
                let deg: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                cfg.env.coarse_step_r = deg.to_radians();
            }
            ("env", "fine_step_r") => {
                let deg: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                cfg.env.fine_step_r = deg.to_radians();
            }
            ("env", "rot_range") => {
                let deg: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                cfg.env.rot_range = deg.to_radians();
            }
            ("env", "m_succ") => setv!(cfg.env.m_succ, value, section, key),
            ("env", "max_steps") => setv!(cfg.env.max_steps, value, section, key),
            ("env", "beta") => setv!(cfg.env.beta, value, section, key),
            ("env", "eps") => setv!(cfg.env.eps, value, section, key),
            ("env", "empty_view_pixels") => setv!(cfg.env.empty_view_pixels, value, section, key),
            ("env", "trans_range") => setv!(cfg.env.trans_range, value, section, key),
            ("env", "min_structures") => setv!(cfg.env.min_structures, value, section, key),
            ("env", "min_struct_pixels") => setv!(cfg.env.min_struct_pixels, value, section, key),
            ("env", "fov_mask") => setv!(cfg.env.fov_mask, value, section, key),
            ("env", "axes") => cfg.env.axes = parse_axes(value).map_err(bad)?,
            ("env", "clip_percentile_lo") => clip_lo = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            ("env", "clip_percentile_hi") => clip_hi = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
            ("env", "aug_morph_max") => setv!(cfg.env.aug.morph_max, value, section, key),
            ("env", "aug_erase_max") => setv!(cfg.env.aug.erase_max, value, section, key),
            ("env", "aug_erase_frac_min") => setv!(cfg.env.aug.erase_frac_min, value, section, key),
            ("env", "aug_erase_frac_max") => setv!(cfg.env.aug.erase_frac_max, value, section, key),
            ("env", "aug_depth_occ_max") => setv!(cfg.env.aug.depth_occ_max, value, section, key),
            ("env", "aug_mask_morph_max") => setv!(cfg.env.aug.mask_morph_max, value, section, key),
            ("env", "aug_off") => {
                let off: bool = value.parse().map_err(|e| bad(format!("{e}")))?;
                if off {
                    cfg.env.aug = AugConfig::disabled();
                }
            }

            ("agent", "enc_channels") => cfg.agent.enc_channels = parse_list(value).map_err(bad)?,
            ("agent", "embed_dim") => setv!(cfg.agent.embed_dim, value, section, key),
            ("agent", "head_hidden") => setv!(cfg.agent.head_hidden, value, section, key),
            ("agent", "freeze_encoder") => setv!(cfg.agent.freeze_encoder, value, section, key),

            ("train", "rollout_len") => setv!(cfg.train.rollout_len, value, section, key),
            ("train", "epochs_per_update") => setv!(cfg.train.epochs_per_update, value, section, key),
            ("train", "minibatch") => setv!(cfg.train.minibatch, value, section, key),
            ("train", "lr") => setv!(cfg.train.lr, value, section, key),
            ("train", "gamma") => setv!(cfg.train.gamma, value, section, key),
            ("train", "gae_lambda") => setv!(cfg.train.gae_lambda, value, section, key),
            ("train", "clip_eps") => setv!(cfg.train.clip_eps, value, section, key),
            ("train", "max_grad_norm") => setv!(cfg.train.max_grad_norm, value, section, key),
            ("train", "entropy_start") => setv!(cfg.train.entropy_start, value, section, key),
            ("train", "entropy_end") => setv!(cfg.train.entropy_end, value, section, key),
            ("train", "lambda_v") => setv!(cfg.train.lambda_v, value, section, key),
            ("train", "lambda_d") => setv!(cfg.train.lambda_d, value, section, key),
            ("train", "total_updates") => setv!(cfg.train.total_updates, value, section, key),
            ("train", "n_envs") => setv!(cfg.train.n_envs, value, section, key),
            ("train", "seed") => setv!(cfg.train.seed, value, section, key),
            ("train", "aux_warmup_frac") => setv!(cfg.train.aux_warmup_frac, value, section, key),
            ("train", "curriculum_stages") => cfg.train.curriculum_stages = parse_list(value).map_err(bad)?,
            ("train", "grad_chunks") => setv!(cfg.train.grad_chunks, value, section, key),
            ("train", "checkpoint_every") => setv!(cfg.train.checkpoint_every, value, section, key),
            ("train", "pretrain_pairs") => setv!(cfg.train.pretrain_pairs, value, section, key),
            ("train", "pretrain_epochs") => setv!(cfg.train.pretrain_epochs, value, section, key),
            ("train", "pretrain_lr") => setv!(cfg.train.pretrain_lr, value, section, key),
            ("train", "pretrain_batch") => setv!(cfg.train.pretrain_batch, value, section, key),

            ("eval", "n_pairs") => setv!(cfg.eval.n_pairs, value, section, key),
            ("eval", "thresholds") => cfg.eval.thresholds = parse_thresholds(value).map_err(bad)?,
            ("eval", "seed") => setv!(cfg.eval.seed, value, section, key),
            ("eval", "term_threshold") => setv!(cfg.eval.term_threshold, value, section, key),
            ("eval", "m_succ") => setv!(cfg.eval.m_succ, value, section, key),
            ("eval", "max_steps") => setv!(cfg.eval.max_steps, value, section, key),

            (s, k) => {
                return Err(ConfigError::UnknownKey { section: s.to_string(), key: k.to_string() })
            }
        }
    }

    cfg.env.clip_percentiles = match (clip_lo, clip_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(ConfigError::Invalid(
                "clip_percentile_lo and clip_percentile_hi must be set together".into(),
            ))
        }
    };

    // the agent mirrors the environment's geometry
    cfg.agent.h = cfg.env.h;
    cfg.agent.w = cfg.env.w;
    cfg.agent.n_actions = cfg.env.action_space().n_actions();

    // a fixed-threshold run starts at its single stage
    cfg.env.m_succ = cfg.train.curriculum_stages[0];

    cfg.env.validate().map_err(ConfigError::Invalid)?;
    cfg.agent.validate().map_err(ConfigError::Invalid)?;
    cfg.train.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_run_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# toy configuration
[env]
scene = gen:42:2:6.0
h = 32
w = 32
axes = tx,ty
rot_range = 20
coarse_step_r = 2
fine_step_r = 0.5
aug_off = true

[agent]
enc_channels = 6,8,16
embed_dim = 16
head_hidden = 16
freeze_encoder = true

[train]
rollout_len = 256
minibatch = 64
n_envs = 2
total_updates = 4
seed = 7
curriculum_stages = 100

[eval]
n_pairs = 10
thresholds = 0.5:0.9:0.1
seed = 99
";

    #[test]
    fn sample_config_parses_with_derived_fields() {
        let cfg = parse_run_config(SAMPLE).unwrap();
        assert_eq!(cfg.env.h, 32);
        assert_eq!(cfg.env.axes, vec![0, 1]);
        assert_eq!(cfg.agent.n_actions, 4);
        assert_eq!(cfg.agent.h, 32);
        assert!((cfg.env.rot_range - 20f64.to_radians()).abs() < 1e-12);
        assert!((cfg.env.coarse_step_r - 2f64.to_radians()).abs() < 1e-12);
        assert_eq!(cfg.env.m_succ, 100.0);
        assert_eq!(cfg.eval.thresholds, vec![0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(cfg.env.aug, AugConfig::disabled());
        assert!(matches!(cfg.scene, Some(SceneSpec::Generate { seed: 42, subdiv: 2, .. })));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = "[env]\nbogus_key = 3\n";
        assert!(matches!(
            parse_run_config(text),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn unknown_section_is_an_error() {
        assert!(matches!(
            parse_run_config("[banana]\n"),
            Err(ConfigError::UnknownSection(_))
        ));
    }

    #[test]
    fn key_outside_section_is_an_error() {
        assert!(matches!(
            parse_run_config("h = 3\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn threshold_sweep_syntax_variants() {
        assert_eq!(parse_thresholds("0.5:0.9:0.1").unwrap().len(), 5);
        assert_eq!(parse_thresholds("0.5,0.8").unwrap(), vec![0.5, 0.8]);
        assert!(parse_thresholds("0.9:0.5:0.1").is_err());
    }

    #[test]
    fn clip_percentiles_must_pair() {
        let text = "[env]\nscene = gen:1:1:0\nclip_percentile_lo = 1.0\n";
        assert!(matches!(parse_run_config(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn invalid_derived_config_is_rejected() {
        // rollout not divisible by minibatch
        let text = "[env]\nscene = gen:1:1:0\n[train]\nrollout_len = 100\nminibatch = 64\n";
        assert!(parse_run_config(text).is_err());
    }
}
