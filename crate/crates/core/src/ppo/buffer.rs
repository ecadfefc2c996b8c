//! Rollout storage and generalized advantage estimation.

use ndarray::{Array1, Array2};

/// Transitions of `n_envs` environments over `horizon` steps, stored
/// time-major: row `t * n_envs + e`. Observations are stored whitened, as the
/// networks saw them.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub actor_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    pub actions: Array2<f64>,
    /// Action means of the sampling policy.
    pub means: Array2<f64>,
    pub log_probs: Array1<f64>,
    /// Rewards, including the bootstrapped tail of time-limit cut-offs.
    pub rewards: Array1<f64>,
    pub values: Array1<f64>,
    /// Episode ended at this step without bootstrapping.
    pub dones: Array1<f64>,
    /// Values of the observations following the last stored step.
    pub last_values: Array1<f64>,
    pub old_log_std: Vec<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize, actor_dim: usize, critic_dim: usize, action_dim: usize) -> Self {
        let n = n_envs * horizon;
        RolloutBuffer {
            n_envs,
            horizon,
            actor_obs: Array2::zeros((n, actor_dim)),
            critic_obs: Array2::zeros((n, critic_dim)),
            actions: Array2::zeros((n, action_dim)),
            means: Array2::zeros((n, action_dim)),
            log_probs: Array1::zeros(n),
            rewards: Array1::zeros(n),
            values: Array1::zeros(n),
            dones: Array1::zeros(n),
            last_values: Array1::zeros(n_envs),
            old_log_std: vec![0.0; action_dim],
            advantages: Array1::zeros(n),
            returns: Array1::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `advantages` and `returns`.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (adv, ret) = gae_advantages(self, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

/// `δ_t = r_t + γ V_{t+1} (1 − d_t) − V_t`, `A_t = δ_t + γλ (1 − d_t) A_{t+1}`,
/// returns `A_t + V_t`. Runs independently per environment column.
pub fn gae_advantages(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Array1<f64>, Array1<f64>) {
    let n = buf.n_envs;
    let mut adv = Array1::zeros(buf.len());
    for e in 0..n {
        let mut next_adv = 0.0;
        let mut next_value = buf.last_values[e];
        for t in (0..buf.horizon).rev() {
            let i = t * n + e;
            let live = 1.0 - buf.dones[i];
            let delta = buf.rewards[i] + gamma * next_value * live - buf.values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = buf.values[i];
        }
    }
    let ret = &adv + &buf.values;
    (adv, ret)
}

/// Shifts and scales to zero mean and unit variance (population variance).
pub fn normalize_advantages(adv: &mut Array1<f64>) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.mean().unwrap();
    let std = adv.var(0.0).sqrt();
    adv.mapv_inplace(|a| (a - mean) / (std + 1e-8));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_buffer(n_envs: usize, horizon: usize, seed: u64) -> RolloutBuffer {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut b = RolloutBuffer::new(n_envs, horizon, 1, 1, 1);
        for i in 0..b.len() {
            b.rewards[i] = rng.gen_range(-1.0..1.0);
            b.values[i] = rng.gen_range(-2.0..2.0);
            b.dones[i] = if rng.gen_bool(0.2) { 1.0 } else { 0.0 };
        }
        for e in 0..n_envs {
            b.last_values[e] = rng.gen_range(-2.0..2.0);
        }
        b
    }

    /// Σ_k (γλ)^k δ_{t+k}, stopping after the first episode end.
    fn brute_force(b: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = b.n_envs;
        let value_after = |t: usize, e: usize| {
            if t + 1 < b.horizon {
                b.values[(t + 1) * n + e]
            } else {
                b.last_values[e]
            }
        };
        let mut out = vec![0.0; b.len()];
        for e in 0..n {
            for t in 0..b.horizon {
                let mut sum = 0.0;
                let mut factor = 1.0;
                for k in t..b.horizon {
                    let i = k * n + e;
                    let live = 1.0 - b.dones[i];
                    let delta = b.rewards[i] + gamma * value_after(k, e) * live - b.values[i];
                    sum += factor * delta;
                    if live == 0.0 {
                        break;
                    }
                    factor *= gamma * lambda;
                }
                out[t * n + e] = sum;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in 0u64..1000, gamma in 0.5f64..1.0, lambda in 0.0f64..=1.0) {
            let b = random_buffer(3, 9, seed);
            let (adv, ret) = gae_advantages(&b, gamma, lambda);
            let oracle = brute_force(&b, gamma, lambda);
            for i in 0..b.len() {
                prop_assert!((adv[i] - oracle[i]).abs() < 1e-10);
                prop_assert!((ret[i] - adv[i] - b.values[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_zero_gives_td_error() {
        let b = random_buffer(2, 6, 7);
        let (adv, _) = gae_advantages(&b, 0.9, 0.0);
        for t in 0..6 {
            for e in 0..2 {
                let i = t * 2 + e;
                let next = if t + 1 < 6 { b.values[i + 2] } else { b.last_values[e] };
                let delta = b.rewards[i] + 0.9 * next * (1.0 - b.dones[i]) - b.values[i];
                assert_eq!(adv[i], delta);
            }
        }
    }

    #[test]
    fn gamma_zero_returns_rewards() {
        let b = random_buffer(2, 6, 8);
        let (_, ret) = gae_advantages(&b, 0.0, 0.95);
        for i in 0..b.len() {
            assert_relative_eq!(ret[i], b.rewards[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization() {
        let mut a = Array1::from(vec![1.0, 2.0, 3.0, 6.0]);
        normalize_advantages(&mut a);
        assert_relative_eq!(a.mean().unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(a.var(0.0), 1.0, epsilon = 1e-6);
        assert_eq!(RolloutBuffer::new(4, 24, 66, 48, 12).len(), 96);
    }
}
