//! Left/right and front/back mirror symmetries of the reference quadruped.
//!
//! A mirror reflects the world through the x-z plane (left/right) or the y-z
//! plane (front/back). Polar vectors such as linear velocity and gravity flip
//! the reflected component; axial vectors such as angular velocity keep it and
//! flip the other two. Legs swap with their mirror partner and hip-yaw angles
//! change sign, while hip-pitch and knee angles are preserved.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::observation::{ACTION_DIM, ACTOR_OBS_DIM, CRITIC_OBS_DIM, HISTORY_LEN, JOINTS};
use crate::dynamics::GeneralizedState;
use crate::reward::{Command, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryLabel {
    Identity,
    LeftRight,
    FrontBack,
    Both,
}

impl SymmetryLabel {
    pub const ALL: [SymmetryLabel; 4] = [
        SymmetryLabel::Identity,
        SymmetryLabel::LeftRight,
        SymmetryLabel::FrontBack,
        SymmetryLabel::Both,
    ];

    fn flags(self) -> (bool, bool) {
        match self {
            SymmetryLabel::Identity => (false, false),
            SymmetryLabel::LeftRight => (true, false),
            SymmetryLabel::FrontBack => (false, true),
            SymmetryLabel::Both => (true, true),
        }
    }

    /// Sign pattern for a polar vector.
    pub fn polar(self) -> Vector3<f64> {
        let (lr, fb) = self.flags();
        Vector3::new(if fb { -1.0 } else { 1.0 }, if lr { -1.0 } else { 1.0 }, 1.0)
    }

    /// Sign pattern for an axial vector.
    pub fn axial(self) -> Vector3<f64> {
        let det = if self.flags().0 ^ self.flags().1 { -1.0 } else { 1.0 };
        self.polar() * det
    }

    /// Index of the leg that leg `leg` maps to.
    pub fn leg(self, leg: usize) -> usize {
        let (lr, fb) = self.flags();
        let mut l = leg;
        if lr {
            l ^= 1;
        }
        if fb {
            l ^= 2;
        }
        l
    }

    fn yaw_sign(self) -> f64 {
        if self.flags().0 ^ self.flags().1 {
            -1.0
        } else {
            1.0
        }
    }

    fn command_signs(self, task: TaskKind) -> [f64; 3] {
        let p = self.polar();
        let a = self.axial();
        match task {
            TaskKind::Locomotion => [p.x, p.y, a.z],
            TaskKind::BasePose => [1.0, a.y, a.z],
        }
    }

    pub fn mirror_command(self, c: &Command) -> Command {
        let s = self.command_signs(c.task());
        let v = c.to_array();
        Command::from_array(c.task(), [s[0] * v[0], s[1] * v[1], s[2] * v[2]])
    }

    /// Mirrors joint-space data (positions, velocities, torques or actions).
    pub fn mirror_joints(self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (leg, chunk) in x.chunks(3).enumerate() {
            let dst = self.leg(leg) * 3;
            out[dst] = self.yaw_sign() * chunk[0];
            out[dst + 1] = chunk[1];
            out[dst + 2] = chunk[2];
        }
        out
    }

    pub fn mirror_orientation(self, q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
        let a = self.axial();
        let c = q.coords;
        UnitQuaternion::new_unchecked(Quaternion::new(c.w, a.x * c.x, a.y * c.y, a.z * c.z))
    }

    pub fn mirror_state(self, state: &GeneralizedState) -> GeneralizedState {
        let p = self.polar();
        let a = self.axial();
        let mut out = state.clone();
        out.base_position = state.base_position.component_mul(&p);
        out.base_orientation = self.mirror_orientation(&state.base_orientation);
        out.set_base_linear_velocity(state.base_linear_velocity().component_mul(&p));
        out.set_base_angular_velocity(state.base_angular_velocity().component_mul(&a));
        let q: Vec<f64> = state.joint_positions.iter().copied().collect();
        let qd: Vec<f64> = state.joint_velocities().iter().copied().collect();
        out.joint_positions.copy_from_slice(&self.mirror_joints(&q));
        out.velocity.rows_mut(6, qd.len()).copy_from_slice(&self.mirror_joints(&qd));
        out
    }
}

/// `out[i] = sign[i] · x[index[i]]`
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub index: Vec<usize>,
    pub sign: Vec<f64>,
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        SignedPermutation {
            index: (0..n).collect(),
            sign: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len(), "signed permutation length mismatch");
        self.index.iter().zip(&self.sign).map(|(&i, &s)| s * x[i]).collect()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &i), &s) in out.iter_mut().zip(&self.index).zip(&self.sign) {
            *o = s * x[i];
        }
    }

    fn set_vec3(&mut self, at: usize, signs: Vector3<f64>) {
        for k in 0..3 {
            self.sign[at + k] = signs[k];
        }
    }

    fn set_joints(&mut self, at: usize, label: SymmetryLabel) {
        for leg in 0..JOINTS / 3 {
            let dst = at + 3 * label.leg(leg);
            for k in 0..3 {
                self.index[dst + k] = at + 3 * leg + k;
                self.sign[dst + k] = if k == 0 { label.yaw_sign() } else { 1.0 };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryTransform {
    pub label: SymmetryLabel,
    pub actor: SignedPermutation,
    pub critic: SignedPermutation,
    pub action: SignedPermutation,
}

impl SymmetryTransform {
    pub fn new(label: SymmetryLabel, task: TaskKind) -> Self {
        let cmd = label.command_signs(task);
        let mut actor = SignedPermutation::identity(ACTOR_OBS_DIM);
        let mut critic = SignedPermutation::identity(CRITIC_OBS_DIM);
        actor.sign[..3].copy_from_slice(&cmd);
        critic.sign[..3].copy_from_slice(&cmd);
        for h in 0..HISTORY_LEN {
            actor.set_vec3(3 + 3 * h, label.axial());
        }
        let gravity = 3 + 3 * HISTORY_LEN;
        actor.set_vec3(gravity, label.polar());
        critic.set_vec3(3, label.polar());
        critic.set_vec3(6, label.axial());
        critic.set_vec3(9, label.polar());
        for block in 0..3 {
            actor.set_joints(gravity + 3 + block * JOINTS, label);
            critic.set_joints(12 + block * JOINTS, label);
        }
        let mut action = SignedPermutation::identity(ACTION_DIM);
        action.set_joints(0, label);
        SymmetryTransform {
            label,
            actor,
            critic,
            action,
        }
    }
}

/// Identity, left/right, front/back and both, in that order.
pub fn symmetry_transforms(task: TaskKind) -> [SymmetryTransform; 4] {
    SymmetryLabel::ALL.map(|l| SymmetryTransform::new(l, task))
}

#[cfg(test)]
mod tests {
    use super::super::observation::{assemble_actor_obs, assemble_critic_obs, AngularHistory};
    use super::*;
    use crate::dynamics::RobotModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> GeneralizedState {
        let model = RobotModel::reference();
        let mut s = GeneralizedState::new(&model);
        s.base_position = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3);
        s.base_orientation = UnitQuaternion::from_euler_angles(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-3.0..3.0),
        );
        for v in s.joint_positions.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in s.velocity.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        s
    }

    #[test]
    fn transforms_are_commuting_involutions() {
        for task in [TaskKind::Locomotion, TaskKind::BasePose] {
            let ts = symmetry_transforms(task);
            let x: Vec<f64> = (0..ACTOR_OBS_DIM).map(|i| i as f64 + 0.5).collect();
            let y: Vec<f64> = (0..CRITIC_OBS_DIM).map(|i| i as f64 - 7.25).collect();
            for a in &ts {
                assert_eq!(a.actor.apply(&a.actor.apply(&x)), x);
                assert_eq!(a.critic.apply(&a.critic.apply(&y)), y);
                for b in &ts {
                    assert_eq!(a.actor.apply(&b.actor.apply(&x)), b.actor.apply(&a.actor.apply(&x)));
                }
            }
            let lr = &ts[1];
            let both = &ts[3];
            assert_eq!(ts[2].actor.apply(&lr.actor.apply(&x)), both.actor.apply(&x));
        }
    }

    #[test]
    fn command_mirrors() {
        let c = Command::Locomotion {
            vx: 0.3,
            vy: 0.2,
            yaw_rate: 0.1,
        };
        assert_eq!(SymmetryLabel::LeftRight.mirror_command(&c).to_array(), [0.3, -0.2, -0.1]);
        assert_eq!(SymmetryLabel::FrontBack.mirror_command(&c).to_array(), [-0.3, 0.2, -0.1]);
        let p = Command::BasePose {
            height: 0.3,
            pitch: 0.2,
            yaw_rate: 0.1,
        };
        assert_eq!(SymmetryLabel::LeftRight.mirror_command(&p).to_array(), [0.3, 0.2, -0.1]);
        assert_eq!(SymmetryLabel::FrontBack.mirror_command(&p).to_array(), [0.3, -0.2, -0.1]);
    }

    /// Mirroring the physical state and re-assembling the observation must
    /// agree with permuting the original observation.
    #[test]
    fn observation_permutation_matches_state_mirror() {
        let model = RobotModel::reference();
        let q_def = model.default_joint_positions();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for task in [TaskKind::Locomotion, TaskKind::BasePose] {
            for t in symmetry_transforms(task) {
                for _ in 0..20 {
                    let state = random_state(&mut rng);
                    let cmd = Command::from_array(task, [0.31, -0.2, 0.4]);
                    let mut hist = AngularHistory::default();
                    for _ in 0..5 {
                        hist.push(Vector3::new(rng.gen(), rng.gen(), rng.gen()));
                    }
                    let prev: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();

                    let mut mhist = AngularHistory::default();
                    for (dst, src) in mhist.slots_mut().iter_mut().zip(hist.slots()) {
                        *dst = src.component_mul(&t.label.axial());
                    }
                    let mstate = t.label.mirror_state(&state);
                    let mcmd = t.label.mirror_command(&cmd);
                    let mprev = t.action.apply(&prev);

                    let a = t.actor.apply(&assemble_actor_obs(&cmd, &hist, &state, &q_def, &prev));
                    let b = assemble_actor_obs(&mcmd, &mhist, &mstate, &q_def, &mprev);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() < 1e-12, "{:?}: {x} vs {y}", t.label);
                    }
                    let a = t.critic.apply(&assemble_critic_obs(&cmd, &state, &q_def, &prev));
                    let b = assemble_critic_obs(&mcmd, &mstate, &q_def, &mprev);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() < 1e-12, "{:?}: {x} vs {y}", t.label);
                    }
                }
            }
        }
    }

    #[test]
    fn mirrored_feet_are_reflected() {
        use crate::dynamics::Kinematics;
        let model = RobotModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for label in SymmetryLabel::ALL {
            let state = random_state(&mut rng);
            let m = label.mirror_state(&state);
            let feet = Kinematics::new(&model, &state).foot_positions(&model);
            let mfeet = Kinematics::new(&model, &m).foot_positions(&model);
            for (leg, p) in feet.iter().enumerate() {
                let q = mfeet[label.leg(leg)];
                assert!((p.component_mul(&label.polar()) - q).norm() < 1e-12, "{label:?}");
            }
        }
    }
}
