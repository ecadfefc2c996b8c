//! Proximal policy optimization with an asymmetric actor-critic.
//!
//! The actor sees the deployable observation, the critic the privileged one.
//! Rollouts from a batch of environments feed generalized advantage
//! estimation; minibatches are optionally mirrored under the robot's
//! sagittal and transverse symmetries before the clipped-surrogate step.

mod augment;
mod buffer;
mod config;
mod eval;
pub mod net;
mod policy;
mod rollout;
mod train;
mod update;

pub use augment::{augment_symmetry, Batch};
pub use buffer::{gae_advantages, normalize_advantages, RolloutBuffer};
pub use config::{LrSchedule, TrainConfig};
pub use eval::{
    eval_env_config, evaluate, evaluate_checkpoint, write_eval_outputs, Controller, EvalOptions, EvalRun,
    EvalSummary, PhaseMetrics, ReplayPolicy, SUMMARY_FORMAT_VERSION,
};
pub use net::{Activation, Mlp};
pub use policy::{gaussian_kl, gaussian_log_prob, Policy, PolicySpec, RunningNorm};
pub use rollout::{collect_rollouts, env_seed, RolloutStats, Transition, VecEnv};
pub use train::{
    checkpoint_path, train, Checkpoint, IterationMetrics, TrainOutput, CHECKPOINT_FORMAT_VERSION,
    METRICS_FORMAT_VERSION,
};
pub use update::{ppo_loss, ppo_update, Adam, LossParams, LossStats, PolicyGradient, UpdateStats};
