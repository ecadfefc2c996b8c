use serde::{Deserialize, Serialize};

use super::policy::PolicySpec;
use crate::error::{Error, Result};
use crate::reward::PowerCurriculum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Fixed,
    /// Scale the step size by 1.5 to hold the policy KL near `desired_kl`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub desired_kl: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Multiplies environment rewards before advantage estimation.
    pub reward_scale: f64,
    /// Whiten observations with running statistics.
    pub normalize_observations: bool,
    pub max_iterations: usize,
    pub augment: bool,
    /// Save a checkpoint every this many iterations (0 disables all but the last).
    pub checkpoint_interval: usize,
    pub power_curriculum: PowerCurriculum,
    pub policy: PolicySpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_envs: 256,
            horizon: 24,
            epochs: 5,
            minibatches: 4,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            schedule: LrSchedule::Fixed,
            desired_kl: 0.01,
            value_coef: 1.0,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
            reward_scale: 0.02,
            normalize_observations: true,
            max_iterations: 1000,
            augment: true,
            checkpoint_interval: 50,
            power_curriculum: PowerCurriculum::default(),
            policy: PolicySpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatches == 0 {
            return bad("n_envs, horizon, epochs and minibatches must be ≥ 1".into());
        }
        if self.minibatches > self.n_envs * self.horizon {
            return bad(format!("{} minibatches exceed {} samples", self.minibatches, self.n_envs * self.horizon));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must be in (0, 1], got {}", self.lambda));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must be in (0, 1), got {}", self.clip));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("desired_kl", self.desired_kl),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("value_coef", self.value_coef), ("entropy_coef", self.entropy_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        self.policy.validate()
    }
}
