use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::model::{axis_rotation, RobotModel};
use super::state::GeneralizedState;

/// World-frame placement of every link for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub rotation: Vec<Matrix3<f64>>,
    /// Link frame origins; for jointed links this is the joint pivot.
    pub origin: Vec<Vector3<f64>>,
    /// World joint axis of each link (zero for the base).
    pub axis: Vec<Vector3<f64>>,
    pub com: Vec<Vector3<f64>>,
    pub inertia: Vec<Matrix3<f64>>,
}

impl Kinematics {
    pub fn new(model: &RobotModel, state: &GeneralizedState) -> Self {
        let n = model.links.len();
        let mut rotation = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        let mut axis = Vec::with_capacity(n);
        rotation.push(*state.base_orientation.to_rotation_matrix().matrix());
        origin.push(state.base_position);
        axis.push(Vector3::zeros());
        for k in 1..n {
            let link = &model.links[k];
            let joint = link.joint.as_ref().expect("jointed link");
            let p = link.parent.expect("non-base link has a parent");
            let frame = rotation[p] * joint.origin_rotation;
            let o = origin[p] + rotation[p] * joint.origin_translation;
            rotation.push(frame * axis_rotation(&joint.axis, state.joint_positions[k - 1]));
            origin.push(o);
            axis.push(frame * joint.axis);
        }
        let com = (0..n).map(|k| origin[k] + rotation[k] * model.links[k].com).collect();
        let inertia = (0..n)
            .map(|k| rotation[k] * model.links[k].inertia * rotation[k].transpose())
            .collect();
        Kinematics {
            rotation,
            origin,
            axis,
            com,
            inertia,
        }
    }

    pub fn point(&self, link: usize, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin[link] + self.rotation[link] * local
    }

    /// 3×nv Jacobian of the world velocity of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, model: &RobotModel, link: usize, world_point: &Vector3<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, model.nv());
        let r = world_point - self.origin[0];
        for i in 0..3 {
            jac[(i, i)] = 1.0;
        }
        // e_i × r for the base angular columns
        let cols = [
            Vector3::new(0.0, -r.z, r.y),
            Vector3::new(r.z, 0.0, -r.x),
            Vector3::new(-r.y, r.x, 0.0),
        ];
        for (i, c) in cols.iter().enumerate() {
            jac.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(c);
        }
        for &k in model.chain(link) {
            let c = self.axis[k].cross(&(world_point - self.origin[k]));
            jac.fixed_view_mut::<3, 1>(0, 5 + k).copy_from(&c);
        }
        jac
    }

    /// World-frame velocity of a point rigidly attached to `link`.
    pub fn point_velocity(&self, model: &RobotModel, link: usize, world_point: &Vector3<f64>, v: &DVector<f64>) -> Vector3<f64> {
        let mut out = v.fixed_rows::<3>(0) + v.fixed_rows::<3>(3).cross(&(world_point - self.origin[0]));
        for &k in model.chain(link) {
            out += self.axis[k].cross(&(world_point - self.origin[k])) * v[5 + k];
        }
        out
    }

    /// World-frame angular velocity of every link.
    pub fn angular_velocities(&self, model: &RobotModel, v: &DVector<f64>) -> Vec<Vector3<f64>> {
        let mut w = Vec::with_capacity(model.links.len());
        w.push(v.fixed_rows::<3>(3).into_owned());
        for k in 1..model.links.len() {
            let p = model.links[k].parent.unwrap_or(0);
            w.push(w[p] + self.axis[k] * v[5 + k]);
        }
        w
    }

    pub fn foot_positions(&self, model: &RobotModel) -> Vec<Vector3<f64>> {
        model.feet.iter().map(|f| self.point(f.link, &f.point)).collect()
    }

    pub fn center_of_mass(&self, model: &RobotModel) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for (k, link) in model.links.iter().enumerate() {
            acc += self.com[k] * link.mass;
        }
        acc / model.total_mass()
    }
}
