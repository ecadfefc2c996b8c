//! Clipped-surrogate loss, its analytic gradient, and the optimizer step.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment_symmetry, Batch};
use super::buffer::{normalize_advantages, RolloutBuffer};
use super::config::{LrSchedule, TrainConfig};
use super::policy::{gaussian_kl, gaussian_log_prob, Policy};
use crate::env::SymmetryTransform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl From<&TrainConfig> for LossParams {
    fn from(c: &TrainConfig) -> Self {
        LossParams { clip: c.clip, value_coef: c.value_coef, entropy_coef: c.entropy_coef }
    }
}

/// Gradient of the loss, laid out as actor weights, log-std, critic weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl PolicyGradient {
    pub fn zeros(policy: &Policy) -> Self {
        PolicyGradient {
            actor: vec![0.0; policy.actor.param_count()],
            log_std: vec![0.0; policy.log_std.len()],
            critic: vec![0.0; policy.critic.param_count()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.actor.iter().chain(&self.log_std).chain(&self.critic)
    }

    fn scale(&mut self, s: f64) {
        for g in self.actor.iter_mut().chain(&mut self.log_std).chain(&mut self.critic) {
            *g *= s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    /// Mean clipped surrogate objective (to be maximized).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean KL(old ‖ new) over collected (non-synthesized) samples.
    pub kl: f64,
    pub clip_fraction: f64,
    pub loss: f64,
}

/// Loss `−surrogate + c_v · value_loss − c_e · entropy` and its gradient.
/// Batch observations are already whitened.
pub fn ppo_loss(policy: &Policy, batch: &Batch, p: &LossParams) -> (LossStats, PolicyGradient) {
    let n = batch.len() as f64;
    let mut grad = PolicyGradient::zeros(policy);
    let (mean, trace) = policy.actor.forward_trace(batch.actor_obs.view());
    let var: Vec<f64> = policy.log_std.iter().map(|l| (2.0 * l).exp()).collect();

    let mut d_mean = Array2::zeros(mean.raw_dim());
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for i in 0..batch.len() {
        let mu = mean.row(i);
        let a = batch.actions.row(i);
        let mu_s = mu.as_slice().unwrap();
        let a_s = a.as_slice().unwrap();
        let logp = gaussian_log_prob(mu_s, &policy.log_std, a_s);
        let ratio = (logp - batch.log_probs[i]).exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let bounded = ratio.clamp(1.0 - p.clip, 1.0 + p.clip) * adv;
        surrogate += unclipped.min(bounded);
        if (ratio - 1.0).abs() > p.clip {
            clipped += 1;
        }
        if i < batch.original {
            kl += gaussian_kl(batch.means.row(i).as_slice().unwrap(), &batch.old_log_std, mu_s, &policy.log_std);
        }
        // d(−min)/d logp: the unclipped branch carries gradient r·A.
        if unclipped <= bounded {
            let g = -unclipped / n;
            for j in 0..mu_s.len() {
                let diff = a_s[j] - mu_s[j];
                d_mean[[i, j]] = g * diff / var[j];
                grad.log_std[j] += g * (diff * diff / var[j] - 1.0);
            }
        }
    }
    policy.actor.backward(&trace, d_mean, &mut grad.actor);
    let entropy = policy.entropy();
    for g in &mut grad.log_std {
        *g -= p.entropy_coef;
    }

    let (v, trace) = policy.critic.forward_trace(batch.critic_obs.view());
    let mut d_v = Array2::zeros(v.raw_dim());
    let mut value_loss = 0.0;
    for i in 0..batch.len() {
        let e = v[[i, 0]] - batch.returns[i];
        value_loss += e * e / n;
        d_v[[i, 0]] = p.value_coef * 2.0 * e / n;
    }
    policy.critic.backward(&trace, d_v, &mut grad.critic);

    let surrogate = surrogate / n;
    let stats = LossStats {
        surrogate,
        value_loss,
        entropy,
        kl: if batch.original > 0 { kl / batch.original as f64 } else { 0.0 },
        clip_fraction: clipped as f64 / n,
        loss: -surrogate + p.value_coef * value_loss - p.entropy_coef * entropy,
    };
    (stats, grad)
}

/// Adam over the concatenated policy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn for_policy(lr: f64, policy: &Policy) -> Self {
        Adam::new(lr, policy.actor.param_count() + policy.log_std.len() + policy.critic.param_count())
    }

    /// Descends along `grad`.
    pub fn step(&mut self, policy: &mut Policy, grad: &PolicyGradient) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let params = policy
            .actor
            .params_mut()
            .iter_mut()
            .chain(policy.log_std.iter_mut())
            .chain(policy.critic.params_mut().iter_mut());
        for (((p, g), m), v) in params.zip(grad.iter()).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub steps: usize,
}

/// Runs the configured epochs of minibatch updates over a buffer whose
/// advantages and returns are filled. Advantages are normalized over the whole
/// buffer first; with `transforms` every minibatch is mirror-augmented.
pub fn ppo_update<R: Rng>(
    policy: &mut Policy,
    opt: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    transforms: Option<&[SymmetryTransform]>,
    rng: &mut R,
) -> Result<UpdateStats> {
    let params = LossParams::from(cfg);
    let mut adv = buffer.advantages.clone();
    normalize_advantages(&mut adv);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mb = buffer.len() / cfg.minibatches;
    let mut acc = UpdateStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb).take(cfg.minibatches) {
            let mut batch = Batch::from_buffer(buffer, &adv, chunk);
            if let Some(t) = transforms {
                batch = augment_symmetry(&batch, t);
            }
            let (stats, mut grad) = ppo_loss(policy, &batch, &params);
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss {:?} (surrogate {}, value {}, entropy {}, kl {})",
                    stats.loss, stats.surrogate, stats.value_loss, stats.entropy, stats.kl
                )));
            }
            if cfg.schedule == LrSchedule::Adaptive {
                if stats.kl > 2.0 * cfg.desired_kl {
                    opt.lr = (opt.lr / 1.5).max(1e-5);
                } else if stats.kl < 0.5 * cfg.desired_kl && stats.kl > 0.0 {
                    opt.lr = (opt.lr * 1.5).min(1e-2);
                }
            }
            let norm = grad.norm();
            if norm > cfg.max_grad_norm {
                grad.scale(cfg.max_grad_norm / norm);
            }
            opt.step(policy, &grad);
            acc.surrogate += stats.surrogate;
            acc.value_loss += stats.value_loss;
            acc.entropy += stats.entropy;
            acc.kl += stats.kl;
            acc.clip_fraction += stats.clip_fraction;
            acc.grad_norm += norm;
            acc.steps += 1;
        }
    }
    let k = acc.steps.max(1) as f64;
    Ok(UpdateStats {
        surrogate: acc.surrogate / k,
        value_loss: acc.value_loss / k,
        entropy: acc.entropy / k,
        kl: acc.kl / k,
        clip_fraction: acc.clip_fraction / k,
        grad_norm: acc.grad_norm / k,
        learning_rate: opt.lr,
        steps: acc.steps,
    })
}
