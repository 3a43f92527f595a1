//! Command-line interface: mesh generation, pose sampling, supervised
//! warm start, PPO training, the synthetic threshold-sweep evaluation,
//! single-shot inference, and debug rendering.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical abort.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use rlreg_core::agent::{load_checkpoint, save_checkpoint, Agent, CheckpointExtras};
use rlreg_core::config::{load_run_config, parse_thresholds, RunConfig, SceneSpec};
use rlreg_core::env::RegEnv;
use rlreg_core::infer::{run_inference, summarize, threshold_sweep, InferenceTask, RESULTS_HEADER, STATS_HEADER};
use rlreg_core::ppo::PpoError;
use rlreg_core::pretrain::pretrain_supervised;
use rlreg_core::scene::{generate_synthetic_scene, load_scene, SceneModel};
use rlreg_core::se3::{se3_exp, Pose, Twist};
use rlreg_core::train::{train_loop, TrainError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "rlreg", version, about = "Render-and-compare rigid registration with a discrete-action RL agent")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled liver-like mesh.
    GenMesh {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        subdiv: u32,
        #[arg(long, default_value_t = 6.0)]
        bump: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample valid camera poses around a scene's reference pose.
    SamplePoses {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised warm start of the encoder + fusion on pose regression.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PPO training (optionally from a warm-start checkpoint).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV path (default: `<out stem>.metrics.csv`).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Synthetic evaluation: threshold sweep over unseen pose pairs.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Override, e.g. `0.5:0.9:0.1` or `0.5,0.8`.
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Stats CSV path (default: `<out stem>.stats.csv`).
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Single registration run with a per-step trace.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// `ref`, `twist:vx,vy,vz,wx,wy,wz` (left-applied to the reference
        /// pose), or 12 comma-separated values (row-major R, then t).
        #[arg(long)]
        target_pose: String,
        #[arg(long)]
        init_pose: String,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render a pose and dump per-channel graymaps plus a text sidecar.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "ref")]
        pose: String,
        #[arg(long)]
        out_prefix: String,
        /// Observation resolution.
        #[arg(long, default_value_t = 128)]
        res: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    };
    std::process::exit(code);
}

/// Map the error chain onto the documented exit codes.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(ppo) = cause.downcast_ref::<PpoError>() {
            if matches!(ppo, PpoError::NonFiniteLoss { .. }) {
                return 4;
            }
        }
        if let Some(te) = cause.downcast_ref::<TrainError>() {
            if matches!(te, TrainError::Ppo(PpoError::NonFiniteLoss { .. })) {
                return 4;
            }
            if matches!(te, TrainError::Config(_)) {
                return 2;
            }
        }
        if cause.downcast_ref::<rlreg_core::config::ConfigError>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<clap::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<rlreg_core::scene::SceneError>().is_some()
            || cause.downcast_ref::<rlreg_core::agent::CheckpointError>().is_some()
            || cause.downcast_ref::<rlreg_core::infer::InferError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
        {
            return 3;
        }
    }
    3
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenMesh { seed, subdiv, bump, out } => {
            if !(1..=5).contains(&subdiv) {
                return Err(anyhow::Error::new(rlreg_core::config::ConfigError::Invalid(
                    format!("subdiv {subdiv} outside [1, 5]"),
                )));
            }
            let scene = generate_synthetic_scene(seed, subdiv, bump);
            std::fs::write(&out, scene.to_text()).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} ({} vertices, {} faces, {} landmarks, {} sample points)",
                out.display(),
                scene.vertices.len(),
                scene.faces.len(),
                scene.landmarks.len(),
                scene.sample_points.len()
            );
            Ok(())
        }
        Cmd::SamplePoses { scene, n, seed, out } => {
            let model = Arc::new(load_scene(&scene)?);
            let env = RegEnv::new(model, rlreg_core::env::EnvConfig { h: 64, w: 64, ..Default::default() })?;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut csv = String::from("idx,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n");
            for i in 0..n {
                let p = env.sample_valid_pose(&mut rng)?;
                csv.push_str(&format!("{i},{}\n", pose_to_csv(&p)));
            }
            std::fs::write(&out, csv)?;
            println!("wrote {} poses to {}", n, out.display());
            Ok(())
        }
        Cmd::Pretrain { config, out } => {
            let cfg = load_run_config(&config)?;
            let (scene, env) = build_env(&cfg)?;
            let _ = scene;
            let mut agent = Agent::new(cfg.agent.clone(), cfg.train.seed).map_err(|e| anyhow!(e))?;
            let t0 = Instant::now();
            let metrics = pretrain_supervised(&mut agent, &env, &cfg.train)?;
            save_checkpoint(&agent, &CheckpointExtras::default(), &out)?;
            println!(
                "pretrained {} pairs x {} epochs in {:.1}s; holdout loss {:.5} -> {:.5}; wrote {}",
                cfg.train.pretrain_pairs,
                cfg.train.pretrain_epochs,
                t0.elapsed().as_secs_f64(),
                metrics.holdout_loss.first().unwrap_or(&f64::NAN),
                metrics.holdout_loss.last().unwrap_or(&f64::NAN),
                out.display()
            );
            Ok(())
        }
        Cmd::Train { config, warm_start, out, metrics } => {
            let cfg = load_run_config(&config)?;
            let scene = load_scene_spec(&cfg)?;
            let mut agent = match &warm_start {
                Some(path) => {
                    let (loaded, _) = load_checkpoint(path)?;
                    check_agent_compat(loaded.config(), &cfg)?;
                    let mut a = loaded;
                    a.set_freeze_encoder(cfg.agent.freeze_encoder);
                    a
                }
                None => Agent::new(cfg.agent.clone(), cfg.train.seed).map_err(|e| anyhow!(e))?,
            };
            let report = train_loop(scene, &cfg.env, &mut agent, &cfg.train, Some(&out))?;
            let metrics_path = metrics.unwrap_or_else(|| out.with_extension("metrics.csv"));
            std::fs::write(&metrics_path, report.metrics_csv())?;
            println!(
                "trained {} updates; stages visited {:?}; final trailing success {:.3}; checkpoint {}; metrics {}",
                report.metrics.len(),
                report.stages_visited,
                report.final_success_rate,
                out.display(),
                metrics_path.display()
            );
            Ok(())
        }
        Cmd::Eval { config, ckpt, thresholds, n_pairs, out, stats } => {
            let mut cfg = load_run_config(&config)?;
            if let Some(t) = thresholds {
                cfg.eval.thresholds =
                    parse_thresholds(&t).map_err(rlreg_core::config::ConfigError::Invalid)?;
            }
            if let Some(n) = n_pairs {
                cfg.eval.n_pairs = n;
            }
            let (_, env) = build_env(&cfg)?;
            let (agent, _) = load_checkpoint(&ckpt)?;
            check_agent_compat(agent.config(), &cfg)?;

            let t0 = Instant::now();
            let rows = threshold_sweep(
                &agent,
                &env,
                cfg.eval.n_pairs,
                &cfg.eval.thresholds,
                cfg.eval.seed,
                cfg.eval.m_succ,
                cfg.eval.max_steps,
            )?;
            let elapsed = t0.elapsed().as_secs_f64();

            let mut csv = String::from(RESULTS_HEADER);
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.to_csv_line());
                csv.push('\n');
            }
            std::fs::write(&out, csv)?;

            let stats_rows = summarize(&rows);
            let mut stats_csv = String::from(STATS_HEADER);
            stats_csv.push('\n');
            for s in &stats_rows {
                stats_csv.push_str(&s.to_csv_line());
                stats_csv.push('\n');
            }
            let stats_path = stats.unwrap_or_else(|| out.with_extension("stats.csv"));
            std::fs::write(&stats_path, &stats_csv)?;

            let stopped_well = rows
                .iter()
                .filter(|r| {
                    matches!(
                        r.stop_cause,
                        rlreg_core::infer::StopCause::Threshold | rlreg_core::infer::StopCause::Success
                    )
                })
                .count();
            println!(
                "evaluated {} episodes in {:.1}s ({:.3}s per episode); {}/{} stopped by threshold or success",
                rows.len(),
                elapsed,
                elapsed / rows.len().max(1) as f64,
                stopped_well,
                rows.len()
            );
            for s in &stats_rows {
                println!(
                    "threshold {:.1}: median m {:.2} mm^2, mean m {:.2} mm^2, frac<50 {:.3}, median TRE {:.2} mm",
                    s.threshold, s.median_m, s.mean_m, s.frac_below_50, s.median_tre
                );
            }
            println!("wrote {} and {}", out.display(), stats_path.display());
            Ok(())
        }
        Cmd::Infer { config, ckpt, scene, target_pose, init_pose, threshold, trace } => {
            let mut cfg = load_run_config(&config)?;
            if let Some(path) = scene {
                cfg.scene = Some(SceneSpec::File(path));
            }
            let (_, env) = build_env(&cfg)?;
            let (agent, _) = load_checkpoint(&ckpt)?;
            check_agent_compat(agent.config(), &cfg)?;
            let tgt_pose = parse_pose(&target_pose, &env)?;
            let init = parse_pose(&init_pose, &env)?;
            let tgt_obs = env.render_observation(&tgt_pose);
            let task = InferenceTask {
                env: &env,
                init_pose: init,
                tgt_obs: &tgt_obs,
                tgt_pose: Some(tgt_pose),
                m_succ: Some(cfg.eval.m_succ),
                threshold: threshold.unwrap_or(cfg.eval.term_threshold),
                max_steps: cfg.eval.max_steps,
                record_trace: trace.is_some(),
            };
            let t0 = Instant::now();
            let res = run_inference(&agent, &task)?;
            println!(
                "stopped after {} steps ({}) in {:.2}s; final m = {} mm^2; best term confidence {:.3}",
                res.steps_taken,
                res.stop_cause.name(),
                t0.elapsed().as_secs_f64(),
                res.final_m.map(|m| format!("{m:.3}")).unwrap_or_else(|| "n/a".into()),
                res.best_term_prob
            );
            println!("final pose: {}", pose_to_csv(&res.final_pose));
            if let (Some(path), Some(rows)) = (trace, res.trace) {
                let mut csv = String::from("step_idx,axis,sign,granularity,m,reward,term_prob,done_reason\n");
                for r in rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{:.6},{},{:.6},{}\n",
                        r.step_idx,
                        r.axis,
                        r.sign,
                        match r.granularity {
                            rlreg_core::env::Granularity::Coarse => "coarse",
                            rlreg_core::env::Granularity::Fine => "fine",
                        },
                        r.m,
                        r.reward,
                        r.term_prob,
                        r.done_reason.map(|c| c.name()).unwrap_or("")
                    ));
                }
                std::fs::write(&path, csv)?;
                println!("wrote trace to {}", path.display());
            }
            Ok(())
        }
        Cmd::Render { scene, pose, out_prefix, res } => {
            let model = Arc::new(load_scene(&scene)?);
            let env_cfg = rlreg_core::env::EnvConfig { h: res, w: res, ..Default::default() };
            let env = RegEnv::new(model, env_cfg)?;
            let p = parse_pose(&pose, &env)?;
            let obs = env.render_observation(&p);
            let names = ["ligament", "ridge_right", "ridge_left", "silhouette", "invdepth", "liver"];
            for (c, name) in names.iter().enumerate() {
                let path = format!("{out_prefix}_{name}.pgm");
                write_pgm(Path::new(&path), obs.channel(c), obs.width, obs.height)?;
            }
            let k = env.intrinsics();
            let sidecar = format!(
                "pose = {}\nfx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\n",
                pose_to_csv(&p),
                k.fx, k.fy, k.cx, k.cy, k.width, k.height
            );
            std::fs::write(format!("{out_prefix}_info.txt"), sidecar)?;
            println!("wrote {out_prefix}_<channel>.pgm x6 and {out_prefix}_info.txt");
            Ok(())
        }
    }
}

fn build_env(cfg: &RunConfig) -> Result<(Arc<SceneModel>, RegEnv)> {
    let scene = load_scene_spec(cfg)?;
    let env = RegEnv::new(Arc::clone(&scene), cfg.env.clone())?;
    Ok((scene, env))
}

fn load_scene_spec(cfg: &RunConfig) -> Result<Arc<SceneModel>> {
    let spec = cfg.scene.as_ref().ok_or(rlreg_core::config::ConfigError::NoScene)?;
    Ok(Arc::new(spec.load()?))
}

fn check_agent_compat(agent_cfg: &rlreg_core::agent::AgentConfig, cfg: &RunConfig) -> Result<()> {
    if (agent_cfg.h, agent_cfg.w) != (cfg.env.h, cfg.env.w)
        || agent_cfg.n_actions != cfg.env.action_space().n_actions()
    {
        return Err(anyhow::Error::new(rlreg_core::config::ConfigError::Invalid(format!(
            "checkpoint ({}x{}, {} actions) does not match the configured environment ({}x{}, {} actions)",
            agent_cfg.h,
            agent_cfg.w,
            agent_cfg.n_actions,
            cfg.env.h,
            cfg.env.w,
            cfg.env.action_space().n_actions()
        ))));
    }
    Ok(())
}

fn pose_to_csv(p: &Pose) -> String {
    let mut vals = Vec::with_capacity(12);
    for row in &p.r {
        for v in row {
            vals.push(format!("{v}"));
        }
    }
    for v in &p.t {
        vals.push(format!("{v}"));
    }
    vals.join(",")
}

/// Pose strings: `ref`, `twist:vx,vy,vz,wx,wy,wz` (mm and radians,
/// left-applied to the scene reference pose), or 12 comma-separated
/// numbers (row-major rotation, then translation).
fn parse_pose(s: &str, env: &RegEnv) -> Result<Pose> {
    let bad = |msg: String| anyhow::Error::new(rlreg_core::config::ConfigError::Invalid(msg));
    if s == "ref" {
        return Ok(env.reference_pose());
    }
    if let Some(rest) = s.strip_prefix("twist:") {
        let vals: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad twist component: {e}")))?;
        if vals.len() != 6 {
            return Err(bad(format!("twist needs 6 components, got {}", vals.len())));
        }
        let xi = Twist::from_array([vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]]);
        return Ok(rlreg_core::se3::pose_compose(&se3_exp(&xi), &env.reference_pose()));
    }
    let vals: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(format!("bad pose value: {e}")))?;
    if vals.len() != 12 {
        return Err(bad(format!("pose needs 12 values (9 rotation + 3 translation), got {}", vals.len())));
    }
    let r = [
        [vals[0], vals[1], vals[2]],
        [vals[3], vals[4], vals[5]],
        [vals[6], vals[7], vals[8]],
    ];
    let r = rlreg_core::se3::orthonormalize(&r).map_err(|e| bad(format!("rotation block: {e}")))?;
    Ok(Pose { r, t: [vals[9], vals[10], vals[11]] })
}

/// Binary (P5) portable graymap, values scaled to 0..255.
fn write_pgm(path: &Path, plane: &[f32], width: usize, height: usize) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = plane.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}
