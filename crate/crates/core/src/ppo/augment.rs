//! Training batches and mirror-symmetry augmentation.

use ndarray::{concatenate, Array1, Array2, Axis};

use super::buffer::RolloutBuffer;
use crate::env::{SignedPermutation, SymmetryTransform};

/// A set of samples consumed by one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub actor_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    pub actions: Array2<f64>,
    /// Action means of the sampling policy.
    pub means: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
    pub values: Array1<f64>,
    /// Log standard deviation of the sampling policy.
    pub old_log_std: Vec<f64>,
    /// Leading rows that were collected rather than synthesized.
    pub original: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers rows of a buffer whose advantages are already computed.
    pub fn from_buffer(buf: &RolloutBuffer, advantages: &Array1<f64>, rows: &[usize]) -> Batch {
        Batch {
            actor_obs: buf.actor_obs.select(Axis(0), rows),
            critic_obs: buf.critic_obs.select(Axis(0), rows),
            actions: buf.actions.select(Axis(0), rows),
            means: buf.means.select(Axis(0), rows),
            log_probs: buf.log_probs.select(Axis(0), rows),
            advantages: advantages.select(Axis(0), rows),
            returns: buf.returns.select(Axis(0), rows),
            values: buf.values.select(Axis(0), rows),
            old_log_std: buf.old_log_std.clone(),
            original: rows.len(),
        }
    }
}

fn permute_rows(x: &Array2<f64>, p: &SignedPermutation) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
        for (j, d) in dst.iter_mut().enumerate() {
            *d = p.sign[j] * src[p.index[j]];
        }
    }
    out
}

/// Stacks the batch under every transform, in the order given. Observations,
/// actions and sampling means are mirrored; log-probabilities, advantages,
/// returns and values are copied.
pub fn augment_symmetry(batch: &Batch, transforms: &[SymmetryTransform]) -> Batch {
    let map = |f: &dyn Fn(&SymmetryTransform) -> Array2<f64>| {
        let parts: Vec<Array2<f64>> = transforms.iter().map(f).collect();
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(0), &views).unwrap()
    };
    let copy = |x: &Array1<f64>| {
        let views = vec![x.view(); transforms.len()];
        concatenate(Axis(0), &views).unwrap()
    };
    Batch {
        actor_obs: map(&|t| permute_rows(&batch.actor_obs, &t.actor)),
        critic_obs: map(&|t| permute_rows(&batch.critic_obs, &t.critic)),
        actions: map(&|t| permute_rows(&batch.actions, &t.action)),
        means: map(&|t| permute_rows(&batch.means, &t.action)),
        log_probs: copy(&batch.log_probs),
        advantages: copy(&batch.advantages),
        returns: copy(&batch.returns),
        values: copy(&batch.values),
        old_log_std: batch.old_log_std.clone(),
        original: batch.original,
    }
}

/// Rows of `x` under every transform selected by `pick`, stacked.
pub(crate) fn stack_mirrored(
    x: &Array2<f64>,
    transforms: &[SymmetryTransform],
    pick: impl Fn(&SymmetryTransform) -> &SignedPermutation,
) -> Array2<f64> {
    let parts: Vec<Array2<f64>> = transforms.iter().map(|t| permute_rows(x, pick(t))).collect();
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{symmetry_transforms, SymmetryLabel, ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM};
    use crate::reward::TaskKind;
    use rand::{Rng, SeedableRng};

    fn random_batch(n: usize, seed: u64) -> Batch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r, c| Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0));
        let actor_obs = m(n, ACTOR_OBS_DIM);
        let critic_obs = m(n, CRITIC_OBS_DIM);
        let actions = m(n, ACTION_DIM);
        let means = m(n, ACTION_DIM);
        let v = m(4, n);
        Batch {
            actor_obs,
            critic_obs,
            actions,
            means,
            log_probs: v.row(0).to_owned(),
            advantages: v.row(1).to_owned(),
            returns: v.row(2).to_owned(),
            values: v.row(3).to_owned(),
            old_log_std: vec![-0.5; ACTION_DIM],
            original: n,
        }
    }

    fn slice(b: &Batch, k: usize, n: usize) -> Batch {
        let rows: Vec<usize> = (k * n..(k + 1) * n).collect();
        Batch {
            actor_obs: b.actor_obs.select(Axis(0), &rows),
            critic_obs: b.critic_obs.select(Axis(0), &rows),
            actions: b.actions.select(Axis(0), &rows),
            means: b.means.select(Axis(0), &rows),
            log_probs: b.log_probs.select(Axis(0), &rows),
            advantages: b.advantages.select(Axis(0), &rows),
            returns: b.returns.select(Axis(0), &rows),
            values: b.values.select(Axis(0), &rows),
            old_log_std: b.old_log_std.clone(),
            original: n,
        }
    }

    #[test]
    fn four_times_with_identity_first() {
        for task in [TaskKind::Locomotion, TaskKind::BasePose] {
            let t = symmetry_transforms(task);
            assert_eq!(t[0].label, SymmetryLabel::Identity);
            let b = random_batch(64, 1);
            let aug = augment_symmetry(&b, &t);
            assert_eq!(aug.len(), 256);
            assert_eq!(aug.actor_obs.nrows(), 256);
            assert_eq!(slice(&aug, 0, 64), b);
            assert!((aug.advantages.mean().unwrap() - b.advantages.mean().unwrap()).abs() < 1e-12);
            assert!((aug.returns.sum() / 4.0 - b.returns.sum()).abs() < 1e-9);
        }
    }

    #[test]
    fn mirroring_twice_restores_batch() {
        let t = symmetry_transforms(TaskKind::Locomotion);
        let b = random_batch(16, 2);
        for k in 1..4 {
            let once = slice(&augment_symmetry(&b, &t), k, 16);
            let twice = slice(&augment_symmetry(&once, &t), k, 16);
            assert_eq!(twice, b, "{:?}", t[k].label);
        }
    }
}
