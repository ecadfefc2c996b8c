//! The collect → augment → update loop, checkpoints and metrics.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::policy::Policy;
use super::rollout::{collect_rollouts, RolloutStats, VecEnv};
use super::update::{ppo_update, Adam, UpdateStats};
use crate::env::{symmetry_transforms, EnvConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const METRICS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub iteration: usize,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub power_progress: f64,
    pub policy: Policy,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        let probe: serde_json::Value = serde_json::from_str(&text)?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "format version {v}, this build reads {CHECKPOINT_FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Checkpoint(format!("{} has no format_version", path.display()))),
        }
        let ckpt: Checkpoint = serde_json::from_value(probe)?;
        ckpt.policy.check()?;
        ckpt.env.validate()?;
        Ok(ckpt)
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub format_version: u32,
    pub iteration: usize,
    pub samples: usize,
    pub mean_reward: f64,
    pub mean_tracking: f64,
    /// Weighted per-step means of every reward term.
    pub term_means: BTreeMap<String, f64>,
    /// Unweighted per-step means of every reward term.
    pub raw_means: BTreeMap<String, f64>,
    pub episodes: usize,
    pub terminated: usize,
    pub timeouts: usize,
    pub faults: usize,
    /// Terminated fraction of the episodes that ended this iteration.
    pub fall_rate: f64,
    pub mean_episode_length: f64,
    pub mean_episode_return: f64,
    pub mean_terrain_level: f64,
    pub power_progress: f64,
    /// Effective weights of the energy terms during this rollout.
    pub power_weights: BTreeMap<String, f64>,
    pub action_std: f64,
    pub update: UpdateStats,
}

impl IterationMetrics {
    fn new(
        iteration: usize,
        samples: usize,
        stats: RolloutStats,
        venv: &VecEnv,
        progress: f64,
        policy: &Policy,
        update: UpdateStats,
    ) -> Self {
        let spec = venv.envs[0].reward_spec();
        let power_weights = spec
            .terms
            .iter()
            .filter(|t| t.kind.is_energy())
            .map(|t| (t.name.clone(), spec.effective_weight(t)))
            .collect();
        let std = policy.std();
        IterationMetrics {
            format_version: METRICS_FORMAT_VERSION,
            iteration,
            samples,
            mean_reward: stats.mean_reward,
            mean_tracking: stats.mean_tracking,
            fall_rate: if stats.episodes > 0 { stats.terminated as f64 / stats.episodes as f64 } else { 0.0 },
            term_means: stats.term_means,
            raw_means: stats.raw_means,
            episodes: stats.episodes,
            terminated: stats.terminated,
            timeouts: stats.timeouts,
            faults: stats.faults,
            mean_episode_length: stats.mean_episode_length,
            mean_episode_return: stats.mean_episode_return,
            mean_terrain_level: venv.mean_level(),
            power_progress: progress,
            power_weights,
            action_std: std.iter().sum::<f64>() / std.len() as f64,
            update,
        }
    }
}

pub struct TrainOutput {
    pub policy: Policy,
    pub metrics: Vec<IterationMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub power_progress: f64,
}

pub fn checkpoint_path(out: &Path, iteration: usize) -> PathBuf {
    out.join("checkpoints").join(format!("iter_{iteration:05}.json"))
}

/// Trains a policy. With `out`, writes `metrics.jsonl` and checkpoints every
/// `checkpoint_interval` iterations plus after the last one.
pub fn train(
    cfg: &TrainConfig,
    env_cfg: &EnvConfig,
    out: Option<&Path>,
    on_iteration: &mut dyn FnMut(&IterationMetrics),
) -> Result<TrainOutput> {
    cfg.validate()?;
    env_cfg.validate()?;
    cfg.policy.check_env_dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = Policy::new(&cfg.policy, &mut rng)?;
    let mut opt = Adam::for_policy(cfg.learning_rate, &policy);
    let mut venv = VecEnv::new(env_cfg, cfg.n_envs, cfg.seed)?;
    let transforms = symmetry_transforms(env_cfg.task);
    let mut curriculum = cfg.power_curriculum.clone();
    let mut metrics_file = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };

    let mut metrics = Vec::with_capacity(cfg.max_iterations);
    let mut checkpoints = Vec::new();
    let mut progress = curriculum.progress(0);
    for it in 0..cfg.max_iterations {
        venv.set_power_progress(progress);
        let aug = cfg.augment.then_some(&transforms[..]);
        let (mut buf, stats) = collect_rollouts(&mut policy, &mut venv, cfg, aug, &mut rng)?;
        buf.compute_advantages(cfg.gamma, cfg.lambda);
        let update = ppo_update(&mut policy, &mut opt, &buf, cfg, aug, &mut rng)?;

        let mean_tracking = stats.mean_tracking;
        let m = IterationMetrics::new(it, (it + 1) * buf.len(), stats, &venv, progress, &policy, update);
        progress = curriculum.update(it + 1, mean_tracking);
        if let Some(w) = metrics_file.as_mut() {
            serde_json::to_writer(&mut *w, &m)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        on_iteration(&m);
        metrics.push(m);

        let last = it + 1 == cfg.max_iterations;
        let due = cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0;
        if let (Some(dir), true) = (out, last || due) {
            let path = checkpoint_path(dir, it + 1);
            Checkpoint {
                format_version: CHECKPOINT_FORMAT_VERSION,
                iteration: it + 1,
                train: cfg.clone(),
                env: env_cfg.clone(),
                power_progress: progress,
                policy: policy.clone(),
            }
            .save(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(TrainOutput { policy, metrics, checkpoints, power_progress: progress })
}



#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::TaskKind;

    fn tiny() -> (TrainConfig, EnvConfig) {
        let mut cfg = TrainConfig {
            n_envs: 4,
            horizon: 8,
            epochs: 2,
            minibatches: 2,
            max_iterations: 3,
            checkpoint_interval: 2,
            ..Default::default()
        };
        cfg.policy.actor_hidden = vec![16];
        cfg.policy.critic_hidden = vec![16];
        let mut env = EnvConfig::flat(TaskKind::Locomotion, 3.73);
        env.episode_length_s = 0.3;
        (cfg, env)
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (cfg, env) = tiny();
        let a = train(&cfg, &env, None, &mut |_| {}).unwrap();
        let b = train(&cfg, &env, None, &mut |_| {}).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.metrics, b.metrics);
        let other = TrainConfig { seed: 1, ..cfg };
        let c = train(&other, &env, None, &mut |_| {}).unwrap();
        assert_ne!(a.policy, c.policy);
    }

    #[test]
    fn writes_metrics_and_checkpoints() {
        let (cfg, env) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let mut seen = Vec::new();
        let out = train(&cfg, &env, Some(dir.path()), &mut |m| seen.push(m.iteration)).unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(out.checkpoints, vec![checkpoint_path(dir.path(), 2), checkpoint_path(dir.path(), 3)]);
        assert!(out.metrics.iter().all(|m| m.samples % (cfg.n_envs * cfg.horizon) == 0));

        let text = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        let parsed: Vec<IterationMetrics> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(parsed, out.metrics);

        let ckpt = Checkpoint::load(&out.checkpoints[1]).unwrap();
        assert_eq!(ckpt.iteration, 3);
        assert_eq!(ckpt.policy, out.policy);
        assert_eq!(ckpt.env, env);
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let (cfg, env) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&TrainConfig { max_iterations: 1, ..cfg }, &env, Some(dir.path()), &mut |_| {}).unwrap();
        let path = &out.checkpoints[0];
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v["format_version"] = serde_json::json!(CHECKPOINT_FORMAT_VERSION + 1);
        fs::write(path, v.to_string()).unwrap();
        assert!(matches!(Checkpoint::load(path), Err(Error::Checkpoint(_))));
        fs::write(path, "{}").unwrap();
        assert!(matches!(Checkpoint::load(path), Err(Error::Checkpoint(_))));
    }
}
