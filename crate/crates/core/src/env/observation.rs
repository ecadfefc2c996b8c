//! Actor and critic observation vectors.
//!
//! Actor (66): command 3 | base angular velocity history 8×3, newest first |
//! projected gravity 3 | q − q_def 12 | q̇ 12 | previous action 12.
//!
//! Critic (48): command 3 | base linear and angular velocity 6 | projected
//! gravity 3 | q − q_def 12 | q̇ 12 | previous action 12.
//!
//! All vectors are expressed in the base frame.

use nalgebra::{UnitQuaternion, Vector3};

use crate::dynamics::GeneralizedState;
use crate::reward::Command;

pub const HISTORY_LEN: usize = 8;
pub const JOINTS: usize = 12;
pub const ACTOR_OBS_DIM: usize = 3 + 3 * HISTORY_LEN + 3 + 3 * JOINTS;
pub const CRITIC_OBS_DIM: usize = 3 + 6 + 3 + 3 * JOINTS;
pub const ACTION_DIM: usize = JOINTS;

/// Fixed-length angular velocity history, newest first, zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularHistory {
    slots: [Vector3<f64>; HISTORY_LEN],
}

impl Default for AngularHistory {
    fn default() -> Self {
        AngularHistory {
            slots: [Vector3::zeros(); HISTORY_LEN],
        }
    }
}

impl AngularHistory {
    pub fn push(&mut self, w: Vector3<f64>) {
        self.slots.rotate_right(1);
        self.slots[0] = w;
    }

    pub fn clear(&mut self) {
        self.slots = [Vector3::zeros(); HISTORY_LEN];
    }

    pub fn slots(&self) -> &[Vector3<f64>; HISTORY_LEN] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Vector3<f64>; HISTORY_LEN] {
        &mut self.slots
    }
}

pub fn projected_gravity(orientation: &UnitQuaternion<f64>) -> Vector3<f64> {
    orientation.inverse_transform_vector(&Vector3::new(0.0, 0.0, -1.0))
}

/// Base twist in the base frame: (linear, angular).
pub fn base_twist_body(state: &GeneralizedState) -> (Vector3<f64>, Vector3<f64>) {
    let r = &state.base_orientation;
    (
        r.inverse_transform_vector(&state.base_linear_velocity()),
        r.inverse_transform_vector(&state.base_angular_velocity()),
    )
}

fn push_joint_blocks(out: &mut Vec<f64>, state: &GeneralizedState, q_def: &[f64], previous_action: &[f64]) {
    out.extend(state.joint_positions.iter().zip(q_def).map(|(q, d)| q - d));
    out.extend(state.joint_velocities().iter());
    out.extend_from_slice(previous_action);
}

pub fn assemble_actor_obs(
    command: &Command,
    history: &AngularHistory,
    state: &GeneralizedState,
    q_def: &[f64],
    previous_action: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(ACTOR_OBS_DIM);
    out.extend(command.to_array());
    for w in history.slots() {
        out.extend(w.iter());
    }
    out.extend(projected_gravity(&state.base_orientation).iter());
    push_joint_blocks(&mut out, state, q_def, previous_action);
    debug_assert_eq!(out.len(), ACTOR_OBS_DIM);
    out
}

pub fn assemble_critic_obs(
    command: &Command,
    state: &GeneralizedState,
    q_def: &[f64],
    previous_action: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(CRITIC_OBS_DIM);
    out.extend(command.to_array());
    let (v, w) = base_twist_body(state);
    out.extend(v.iter());
    out.extend(w.iter());
    out.extend(projected_gravity(&state.base_orientation).iter());
    push_joint_blocks(&mut out, state, q_def, previous_action);
    debug_assert_eq!(out.len(), CRITIC_OBS_DIM);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RobotModel;

    #[test]
    fn dimensions() {
        assert_eq!(ACTOR_OBS_DIM, 66);
        assert_eq!(CRITIC_OBS_DIM, 48);
    }

    #[test]
    fn level_pose_gravity() {
        let model = RobotModel::reference();
        let state = GeneralizedState::new(&model);
        let q_def = model.default_joint_positions();
        let cmd = Command::Locomotion {
            vx: 0.1,
            vy: 0.2,
            yaw_rate: 0.3,
        };
        let obs = assemble_actor_obs(&cmd, &AngularHistory::default(), &state, &q_def, &[0.0; 12]);
        assert_eq!(&obs[..3], &[0.1, 0.2, 0.3]);
        assert_eq!(&obs[27..30], &[0.0, 0.0, -1.0]);
    }

    #[test]
    fn history_is_newest_first() {
        let mut h = AngularHistory::default();
        h.push(Vector3::new(1.0, 0.0, 0.0));
        h.push(Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(h.slots()[0].x, 2.0);
        assert_eq!(h.slots()[1].x, 1.0);
        assert!(h.slots()[2..].iter().all(|w| *w == Vector3::zeros()));
    }
}
