//! Gaussian actor with a separate privileged critic.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::{Activation, Mlp};
use crate::env::{ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    pub actor_input: usize,
    pub critic_input: usize,
    pub action_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial standard deviation of every action dimension.
    pub init_std: f64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            actor_input: ACTOR_OBS_DIM,
            critic_input: CRITIC_OBS_DIM,
            action_dim: ACTION_DIM,
            actor_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            activation: Activation::Elu,
            init_std: 1.0,
        }
    }
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        if self.actor_input == 0 || self.critic_input == 0 || self.action_dim == 0 {
            return Err(Error::Config("policy dimensions must be nonzero".into()));
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be nonzero".into()));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init_std must be positive, got {}", self.init_std)));
        }
        Ok(())
    }

    /// The environment's observation and action contract.
    pub fn check_env_dims(&self) -> Result<()> {
        for (what, expected, actual) in [
            ("actor input", ACTOR_OBS_DIM, self.actor_input),
            ("critic input", CRITIC_OBS_DIM, self.critic_input),
            ("action dimension", ACTION_DIM, self.action_dim),
        ] {
            if expected != actual {
                return Err(Error::Dimension { what, expected, actual });
            }
        }
        Ok(())
    }
}

/// Running per-dimension mean and variance used to whiten observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    const EPS: f64 = 1e-2;
    /// Whitened values are clipped to this magnitude.
    pub const CLIP: f64 = 5.0;

    pub fn new(dim: usize) -> Self {
        RunningNorm { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0 }
    }

    /// Merges the statistics of a batch (rows are samples).
    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let mean = batch.mean_axis(Axis(0)).unwrap();
        let var = batch.var_axis(Axis(0), 0.0);
        let total = self.count + n;
        for j in 0..self.mean.len() {
            let delta = mean[j] - self.mean[j];
            let m2 = self.var[j] * self.count + var[j] * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.mean[j]) / (self.var[j].sqrt() + Self::EPS)).clamp(-Self::CLIP, Self::CLIP);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub spec: PolicySpec,
    pub actor: Mlp,
    pub critic: Mlp,
    /// State-independent log standard deviation per action dimension.
    pub log_std: Vec<f64>,
    pub actor_norm: RunningNorm,
    pub critic_norm: RunningNorm,
}

impl Policy {
    pub fn new<R: Rng>(spec: &PolicySpec, rng: &mut R) -> Result<Policy> {
        spec.validate()?;
        let mut sizes = vec![spec.actor_input];
        sizes.extend(&spec.actor_hidden);
        sizes.push(spec.action_dim);
        let actor = Mlp::new(&sizes, spec.activation, 0.01, rng)?;
        let mut sizes = vec![spec.critic_input];
        sizes.extend(&spec.critic_hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, spec.activation, 1.0, rng)?;
        Ok(Policy {
            spec: spec.clone(),
            actor,
            critic,
            log_std: vec![spec.init_std.ln(); spec.action_dim],
            actor_norm: RunningNorm::new(spec.actor_input),
            critic_norm: RunningNorm::new(spec.critic_input),
        })
    }

    /// Validates internal consistency, e.g. after deserialization.
    pub fn check(&self) -> Result<()> {
        self.spec.validate()?;
        self.actor.check()?;
        self.critic.check()?;
        let dims = [
            ("actor input", self.spec.actor_input, self.actor.input_dim()),
            ("actor output", self.spec.action_dim, self.actor.output_dim()),
            ("critic input", self.spec.critic_input, self.critic.input_dim()),
            ("critic output", 1, self.critic.output_dim()),
            ("log std", self.spec.action_dim, self.log_std.len()),
            ("actor normalizer", self.spec.actor_input, self.actor_norm.mean.len()),
            ("critic normalizer", self.spec.critic_input, self.critic_norm.mean.len()),
        ];
        for (what, expected, actual) in dims {
            if expected != actual {
                return Err(Error::Dimension { what, expected, actual });
            }
        }
        Ok(())
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// Action means for raw (unnormalized) actor observations.
    pub fn action_mean(&self, actor_obs: ArrayView2<f64>) -> Array2<f64> {
        self.actor.forward(self.actor_norm.normalize(actor_obs).view())
    }

    /// Value estimates for raw critic observations.
    pub fn values(&self, critic_obs: ArrayView2<f64>) -> Array1<f64> {
        self.critic.forward(self.critic_norm.normalize(critic_obs).view()).column(0).to_owned()
    }

    /// Deterministic action for one observation.
    pub fn act_mean(&self, actor_obs: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, actor_obs.len()), actor_obs).unwrap();
        self.action_mean(x).row(0).to_vec()
    }

    /// Draws actions around `mean` and returns them with their log-probabilities.
    pub fn sample<R: Rng>(&self, mean: &Array2<f64>, rng: &mut R) -> (Array2<f64>, Array1<f64>) {
        let std = self.std();
        let mut actions = mean.clone();
        let mut logp = Array1::zeros(mean.nrows());
        for (mut row, lp) in actions.rows_mut().into_iter().zip(logp.iter_mut()) {
            let mut acc = 0.0;
            for (j, a) in row.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                *a += std[j] * e;
                acc += -0.5 * e * e - self.log_std[j] - 0.5 * LOG_2PI;
            }
            *lp = acc;
        }
        (actions, logp)
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(mean, &self.log_std, action)
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 * (LOG_2PI + 1.0)).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - 0.5 * LOG_2PI
        })
        .sum()
}

/// KL(old ‖ new) between diagonal Gaussians.
pub fn gaussian_kl(old_mean: &[f64], old_log_std: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    (0..mean.len())
        .map(|j| {
            let (so, sn) = (old_log_std[j].exp(), log_std[j].exp());
            let d = old_mean[j] - mean[j];
            log_std[j] - old_log_std[j] + (so * so + d * d) / (2.0 * sn * sn) - 0.5
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn running_norm_matches_batch_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((100, 3), |(_, j)| rng.gen_range(-1.0..1.0) * (j + 1) as f64 + j as f64);
        let mut norm = RunningNorm::new(3);
        for chunk in data.axis_chunks_iter(Axis(0), 17) {
            norm.update(chunk);
        }
        let mean = data.mean_axis(Axis(0)).unwrap();
        let var = data.var_axis(Axis(0), 0.0);
        for j in 0..3 {
            assert_relative_eq!(norm.mean[j], mean[j], epsilon = 1e-12);
            assert_relative_eq!(norm.var[j], var[j], epsilon = 1e-12);
        }
        assert_eq!(norm.count, 100.0);
    }

    #[test]
    fn sampled_log_prob_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = PolicySpec { actor_hidden: vec![16], critic_hidden: vec![16], init_std: 0.5, ..Default::default() };
        let policy = Policy::new(&spec, &mut rng).unwrap();
        policy.check().unwrap();
        spec.check_env_dims().unwrap();
        let obs = Array2::from_shape_fn((3, ACTOR_OBS_DIM), |(i, j)| ((i + j) % 5) as f64 * 0.1);
        let mean = policy.action_mean(obs.view());
        let (a, lp) = policy.sample(&mean, &mut rng);
        for i in 0..3 {
            let m = mean.row(i).to_vec();
            assert_relative_eq!(lp[i], policy.log_prob(&m, &a.row(i).to_vec()), epsilon = 1e-10);
        }
        assert_eq!(policy.values(Array2::zeros((2, CRITIC_OBS_DIM)).view()).len(), 2);
        let ls = policy.log_std.clone();
        assert_eq!(gaussian_kl(&[0.1; 12], &ls, &[0.1; 12], &ls), 0.0);
        assert!(gaussian_kl(&[0.1; 12], &ls, &[0.2; 12], &ls) > 0.0);
    }
}
