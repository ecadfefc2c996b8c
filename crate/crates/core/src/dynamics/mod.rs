//! Floating-base rigid-body kinematics and dynamics.

mod algorithms;
mod kinematics;
mod model;
pub mod reference;
mod state;

pub use algorithms::{
    add_point_force, bias_forces, bias_forces_kin, contact_jacobian, forward_dynamics, forward_dynamics_mode,
    gravity_forces, gravity_forces_kin, integrate, inverse_dynamics, inverse_dynamics_kin, kinetic_energy,
    leg_gravity_compensation, leg_gravity_compensation_kin, mass_matrix, mass_matrix_kin, potential_energy,
    solve_acceleration, BaseMode,
};
pub use kinematics::Kinematics;
pub use model::{
    Foot, FootConfig, Joint, JointConfig, Link, LinkConfig, RobotConfig, RobotModel, DEFAULT_JOINT_ARMATURE,
    DEFAULT_JOINT_DAMPING,
};
pub use state::{GeneralizedState, GravityEnv, EARTH_GRAVITY};

/// Small models used by the oracle tests.
#[cfg(test)]
pub(crate) mod testing {
    use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};
    use rand::Rng;

    use super::*;

    pub fn tiny_inertia() -> Matrix3<f64> {
        Matrix3::identity() * 1e-12
    }

    pub fn base_link(mass: f64) -> Link {
        Link {
            name: "base".into(),
            parent: None,
            mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.25)),
            com: Vector3::zeros(),
            joint: None,
        }
    }

    pub fn revolute(name: &str, axis: Vector3<f64>, xyz: Vector3<f64>) -> Joint {
        Joint {
            name: name.into(),
            axis,
            origin_translation: xyz,
            origin_rotation: Matrix3::identity(),
            lower: -10.0,
            upper: 10.0,
            velocity_limit: 100.0,
            default_position: 0.0,
            damping: 0.0,
            armature: 0.0,
        }
    }

    /// Planar two-link arm about the y axis hanging off the base origin.
    pub fn double_pendulum(m1: f64, m2: f64, l1: f64, lc1: f64, lc2: f64, i1: f64, i2: f64) -> RobotModel {
        let inertia = |i: f64| Matrix3::from_diagonal(&Vector3::new(i, i, i));
        let links = vec![
            base_link(1.0),
            Link {
                name: "upper".into(),
                parent: Some(0),
                mass: m1,
                inertia: inertia(i1),
                com: Vector3::new(lc1, 0.0, 0.0),
                joint: Some(revolute("j1", Vector3::y(), Vector3::zeros())),
            },
            Link {
                name: "lower".into(),
                parent: Some(1),
                mass: m2,
                inertia: inertia(i2),
                com: Vector3::new(lc2, 0.0, 0.0),
                joint: Some(revolute("j2", Vector3::y(), Vector3::new(l1, 0.0, 0.0))),
            },
        ];
        RobotModel::new("double-pendulum", links, vec![], 0.0).unwrap()
    }

    /// Point mass hanging at distance `length` below a base-mounted pivot.
    pub fn pendulum(mass: f64, length: f64) -> RobotModel {
        let links = vec![
            base_link(1.0),
            Link {
                name: "bob".into(),
                parent: Some(0),
                mass,
                inertia: tiny_inertia(),
                com: Vector3::new(0.0, 0.0, -length),
                joint: Some(revolute("pivot", Vector3::y(), Vector3::zeros())),
            },
        ];
        RobotModel::new("pendulum", links, vec![], 0.0).unwrap()
    }

    pub fn random_state<R: Rng>(model: &RobotModel, rng: &mut R, speed: f64) -> GeneralizedState {
        let mut s = GeneralizedState::new(model);
        s.base_position = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0));
        s.base_orientation = UnitQuaternion::from_euler_angles(
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-3.0..3.0),
        );
        for j in 0..model.joint_count() {
            let joint = model.joint(j);
            s.joint_positions[j] = rng.gen_range(joint.lower.max(-2.0)..joint.upper.min(2.0));
        }
        s.velocity = DVector::from_fn(model.nv(), |_, _| speed * rng.gen_range(-1.0..1.0));
        s
    }

    pub fn random_vector<R: Rng>(n: usize, rng: &mut R, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0))
    }
}
