//! Batched environments and rollout collection.

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::stack_mirrored;
use super::buffer::RolloutBuffer;
use super::config::TrainConfig;
use super::policy::Policy;
use crate::env::{Env, EnvConfig, EpisodeStats, StepResult, SymmetryTransform};
use crate::error::Result;

/// Seed of environment `slot` in a batch seeded with `seed`.
pub fn env_seed(seed: u64, slot: usize) -> u64 {
    let mut z = seed.wrapping_add((slot as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one environment step, taken before any automatic reset.
pub struct Transition {
    pub result: StepResult,
    /// Critic observation of the state reached at a time-limit cut-off.
    pub terminal_critic_obs: Option<Vec<f64>>,
    /// Statistics of the episode that ended at this step.
    pub finished: Option<EpisodeStats>,
}

/// A batch of environments stepped in parallel and reset automatically.
pub struct VecEnv {
    pub envs: Vec<Env>,
}

impl VecEnv {
    pub fn new(cfg: &EnvConfig, n: usize, seed: u64) -> Result<VecEnv> {
        let envs = (0..n)
            .into_par_iter()
            .map(|i| Env::with_slot(cfg.clone(), env_seed(seed, i), i))
            .collect::<Result<Vec<_>>>()?;
        Ok(VecEnv { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn actor_obs(&self) -> Array2<f64> {
        stack(self.envs.iter().map(|e| e.actor_obs()))
    }

    pub fn critic_obs(&self) -> Array2<f64> {
        stack(self.envs.iter().map(|e| e.critic_obs()))
    }

    pub fn set_power_progress(&mut self, progress: f64) {
        for e in &mut self.envs {
            e.set_power_progress(progress);
        }
    }

    /// Applies one action row per environment; finished episodes are reset.
    pub fn step(&mut self, actions: &Array2<f64>) -> Result<Vec<Transition>> {
        let rows: Vec<Vec<f64>> = actions.rows().into_iter().map(|r| r.to_vec()).collect();
        self.envs
            .par_iter_mut()
            .zip(rows.par_iter())
            .map(|(env, a)| {
                let result = env.step(a)?;
                let mut terminal_critic_obs = None;
                let mut finished = None;
                if result.done {
                    if result.timeout && !result.terminated && !result.fault {
                        terminal_critic_obs = Some(env.critic_obs());
                    }
                    env.reset()?;
                    finished = env.finished_episode().cloned();
                }
                Ok(Transition { result, terminal_critic_obs, finished })
            })
            .collect()
    }

    pub fn mean_level(&self) -> f64 {
        self.envs.iter().map(|e| e.level() as f64).sum::<f64>() / self.envs.len().max(1) as f64
    }
}

fn stack(rows: impl Iterator<Item = Vec<f64>>) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = rows.collect();
    let cols = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat).unwrap()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutStats {
    /// Mean reward per step.
    pub mean_reward: f64,
    /// Mean weighted value per step of every reward term.
    pub term_means: BTreeMap<String, f64>,
    /// Mean unweighted value per step of every reward term.
    pub raw_means: BTreeMap<String, f64>,
    /// Mean of the raw tracking terms.
    pub mean_tracking: f64,
    pub episodes: usize,
    pub terminated: usize,
    pub timeouts: usize,
    pub faults: usize,
    pub mean_episode_length: f64,
    pub mean_episode_return: f64,
}

/// Runs `cfg.horizon` steps of every environment with actions sampled from
/// `policy`. Rewards are multiplied by `cfg.reward_scale`; time-limit cut-offs
/// add the discounted value of the reached state, while terminations and
/// faults stop bootstrapping. Observations are whitened with the statistics
/// current at each step, which are then updated with the raw observations
/// (and their mirror images when `transforms` is given).
pub fn collect_rollouts<R: Rng>(
    policy: &mut Policy,
    venv: &mut VecEnv,
    cfg: &TrainConfig,
    transforms: Option<&[SymmetryTransform]>,
    rng: &mut R,
) -> Result<(RolloutBuffer, RolloutStats)> {
    let n = venv.len();
    let horizon = cfg.horizon;
    let s = &policy.spec;
    let mut buf = RolloutBuffer::new(n, horizon, s.actor_input, s.critic_input, s.action_dim);
    buf.old_log_std = policy.log_std.clone();
    let mut stats = RolloutStats::default();
    let mut term_sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut raw_sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut tracking = 0.0;
    let mut ep_len = 0.0;
    let mut ep_ret = 0.0;
    for t in 0..horizon {
        let a_raw = venv.actor_obs();
        let c_raw = venv.critic_obs();
        let a_obs = policy.actor_norm.normalize(a_raw.view());
        let c_obs = policy.critic_norm.normalize(c_raw.view());
        let means = policy.actor.forward(a_obs.view());
        let values = policy.critic.forward(c_obs.view()).column(0).to_owned();
        let (actions, log_probs) = policy.sample(&means, rng);
        let transitions = venv.step(&actions)?;

        let cut: Vec<usize> = (0..n).filter(|&e| transitions[e].terminal_critic_obs.is_some()).collect();
        let mut tail = vec![0.0; n];
        if !cut.is_empty() {
            let obs = stack(cut.iter().map(|&e| transitions[e].terminal_critic_obs.clone().unwrap()));
            for (k, v) in policy.values(obs.view()).iter().enumerate() {
                tail[cut[k]] = cfg.gamma * v;
            }
        }

        let base = t * n;
        buf.actor_obs.slice_mut(s![base..base + n, ..]).assign(&a_obs);
        buf.critic_obs.slice_mut(s![base..base + n, ..]).assign(&c_obs);
        buf.actions.slice_mut(s![base..base + n, ..]).assign(&actions);
        buf.means.slice_mut(s![base..base + n, ..]).assign(&means);
        for (e, tr) in transitions.iter().enumerate() {
            let r = &tr.result;
            buf.log_probs[base + e] = log_probs[e];
            buf.values[base + e] = values[e];
            buf.rewards[base + e] = cfg.reward_scale * r.reward + tail[e];
            buf.dones[base + e] = if r.done { 1.0 } else { 0.0 };
            stats.mean_reward += r.reward;
            tracking += r.breakdown.tracking;
            for term in &r.breakdown.terms {
                *term_sums.entry(term.name.clone()).or_default() += term.weighted;
                *raw_sums.entry(term.name.clone()).or_default() += term.raw;
            }
            if let Some(ep) = &tr.finished {
                stats.episodes += 1;
                stats.terminated += usize::from(ep.terminated);
                stats.timeouts += usize::from(ep.timeout);
                stats.faults += usize::from(ep.fault);
                ep_len += ep.steps as f64;
                ep_ret += ep.total_reward;
            }
        }
        if cfg.normalize_observations {
            update_normalizers(policy, &a_raw, &c_raw, transforms);
        }
    }
    buf.last_values = policy.values(venv.critic_obs().view());

    let steps = (n * horizon) as f64;
    stats.mean_reward /= steps;
    stats.mean_tracking = tracking / steps;
    stats.term_means = term_sums.into_iter().map(|(k, v)| (k, v / steps)).collect();
    stats.raw_means = raw_sums.into_iter().map(|(k, v)| (k, v / steps)).collect();
    if stats.episodes > 0 {
        stats.mean_episode_length = ep_len / stats.episodes as f64;
        stats.mean_episode_return = ep_ret / stats.episodes as f64;
    }
    Ok((buf, stats))
}

/// Whitening statistics see every mirror image so they stay symmetric.
fn update_normalizers(policy: &mut Policy, actor: &Array2<f64>, critic: &Array2<f64>, t: Option<&[SymmetryTransform]>) {
    match t {
        Some(t) => {
            policy.actor_norm.update(stack_mirrored(actor, t, |x| &x.actor).view());
            policy.critic_norm.update(stack_mirrored(critic, t, |x| &x.critic).view());
        }
        None => {
            policy.actor_norm.update(actor.view());
            policy.critic_norm.update(critic.view());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::policy::PolicySpec;
    use crate::reward::TaskKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_policy(seed: u64) -> Policy {
        let spec = PolicySpec { actor_hidden: vec![16], critic_hidden: vec![16], ..Default::default() };
        Policy::new(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn buffer_shape_and_determinism() {
        let cfg = EnvConfig::default();
        let policy = small_policy(0);
        let run = || {
            let mut venv = VecEnv::new(&cfg, 4, 9).unwrap();
            let mut policy = policy.clone();
            let cfg = TrainConfig { horizon: 24, ..Default::default() };
            let out = collect_rollouts(&mut policy, &mut venv, &cfg, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            (out.0, out.1, policy)
        };
        let (a, sa, pa) = run();
        let (b, sb, pb) = run();
        assert_eq!(pa, pb);
        assert!(pa.actor_norm.count > 0.0);
        assert_eq!(a.len(), 96);
        assert_eq!(a.actor_obs.nrows(), 96);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn episodes_restart_within_a_rollout() {
        let mut cfg = EnvConfig::flat(TaskKind::Locomotion, 9.81);
        cfg.episode_length_s = 0.2;
        let mut policy = small_policy(1);
        let mut venv = VecEnv::new(&cfg, 3, 2).unwrap();
        let tc = TrainConfig { horizon: 25, ..Default::default() };
        let (buf, stats) = collect_rollouts(&mut policy, &mut venv, &tc, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // 10-step episodes: every env finishes twice and keeps producing samples.
        assert_eq!(stats.episodes, 6);
        assert_eq!(stats.timeouts, 6);
        assert_eq!(buf.dones.sum(), 6.0);
        for e in 0..3 {
            assert_eq!(buf.dones[9 * 3 + e], 1.0);
            assert_eq!(buf.dones[19 * 3 + e], 1.0);
            // The cut-off reward carries the bootstrapped value.
            assert!(buf.rewards[9 * 3 + e] != buf.rewards[8 * 3 + e]);
        }
        assert!(buf.actor_obs.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn faults_end_episodes_without_bootstrap() {
        let cfg = EnvConfig::flat(TaskKind::Locomotion, 9.81);
        let mut venv = VecEnv::new(&cfg, 2, 3).unwrap();
        let mut actions = Array2::zeros((2, 12));
        actions[[1, 0]] = f64::NAN;
        let tr = venv.step(&actions).unwrap();
        assert!(!tr[0].result.done);
        assert!(tr[1].result.fault && tr[1].result.done);
        assert!(tr[1].terminal_critic_obs.is_none());
        assert!(tr[1].finished.as_ref().unwrap().fault);
        assert!(venv.critic_obs().iter().all(|x| x.is_finite()));
    }
}
