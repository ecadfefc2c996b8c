//! Terms of the floating-base equation of motion
//!
//! ```text
//! τ = M(q) q̈ + b(q, q̇) + g(q) − J_c(q)ᵀ F_c
//! ```
//!
//! `M` is assembled from per-link COM Jacobians (composite form), while `b`
//! and `g` come from a recursive Newton–Euler pass. The two routes are
//! independent, which the ID/FD round-trip tests exploit.

use nalgebra::{DMatrix, DVector, Vector3};

use super::kinematics::Kinematics;
use super::model::RobotModel;
use super::state::{GeneralizedState, GravityEnv};
use crate::error::{Error, Result};

/// Whether the floating base is free or held fixed in space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseMode {
    Floating,
    /// Base accelerations are forced to zero; only the joint block is solved.
    Clamped,
}

/// Joint-space inertia matrix including joint armature.
pub fn mass_matrix(model: &RobotModel, state: &GeneralizedState) -> Result<DMatrix<f64>> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    Ok(mass_matrix_kin(model, &kin))
}

pub fn mass_matrix_kin(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let nv = model.nv();
    let mut m = DMatrix::<f64>::zeros(nv, nv);
    let mut idx: Vec<usize> = Vec::with_capacity(nv);
    let mut jv: Vec<Vector3<f64>> = Vec::with_capacity(nv);
    let mut jw: Vec<Vector3<f64>> = Vec::with_capacity(nv);
    let base = kin.origin[0];
    for (k, link) in model.links.iter().enumerate() {
        if link.mass == 0.0 {
            continue;
        }
        idx.clear();
        jv.clear();
        jw.clear();
        let r = kin.com[k] - base;
        for i in 0..3 {
            let e = Vector3::ith(i, 1.0);
            idx.push(i);
            jv.push(e);
            jw.push(Vector3::zeros());
        }
        for i in 0..3 {
            let e = Vector3::ith(i, 1.0);
            idx.push(3 + i);
            jv.push(e.cross(&r));
            jw.push(e);
        }
        for &c in model.chain(k) {
            idx.push(5 + c);
            jv.push(kin.axis[c].cross(&(kin.com[k] - kin.origin[c])));
            jw.push(kin.axis[c]);
        }
        let inertia = &kin.inertia[k];
        let iw: Vec<Vector3<f64>> = jw.iter().map(|w| inertia * w).collect();
        for a in 0..idx.len() {
            for b in a..idx.len() {
                let val = link.mass * jv[a].dot(&jv[b]) + jw[a].dot(&iw[b]);
                m[(idx[a], idx[b])] += val;
            }
        }
    }
    for j in 0..model.joint_count() {
        m[(6 + j, 6 + j)] += model.joint(j).armature;
    }
    // Only the upper triangle was accumulated.
    for a in 0..nv {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    m
}

/// Recursive Newton–Euler inverse dynamics: returns `M a + b(q, v) + g(q)` for
/// the given world gravity vector (zero gravity vector drops `g`).
pub fn inverse_dynamics_kin(
    model: &RobotModel,
    kin: &Kinematics,
    v: &DVector<f64>,
    a: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let n = model.links.len();
    let mut w = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut acc = Vec::with_capacity(n);
    w.push(v.fixed_rows::<3>(3).into_owned());
    alpha.push(a.fixed_rows::<3>(3).into_owned());
    acc.push(a.fixed_rows::<3>(0).into_owned());
    for k in 1..n {
        let p = model.links[k].parent.unwrap_or(0);
        let r = kin.origin[k] - kin.origin[p];
        let axis = kin.axis[k];
        let qd = v[5 + k];
        let qdd = a[5 + k];
        let wp: Vector3<f64> = w[p];
        let ap: Vector3<f64> = alpha[p];
        acc.push(acc[p] + ap.cross(&r) + wp.cross(&wp.cross(&r)));
        alpha.push(ap + axis * qdd + wp.cross(&(axis * qd)));
        w.push(wp + axis * qd);
    }
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];
    let mut out = DVector::zeros(model.nv());
    for k in (0..n).rev() {
        let link = &model.links[k];
        let rc = kin.com[k] - kin.origin[k];
        let wk = w[k];
        let ac = acc[k] + alpha[k].cross(&rc) + wk.cross(&wk.cross(&rc));
        let f = (ac - gravity) * link.mass;
        let iw = kin.inertia[k] * wk;
        let nc = kin.inertia[k] * alpha[k] + wk.cross(&iw);
        force[k] += f;
        moment[k] += nc + rc.cross(&f);
        if k == 0 {
            break;
        }
        let j = k - 1;
        out[6 + j] = kin.axis[k].dot(&moment[k]) + model.joint(j).armature * a[6 + j];
        let p = link.parent.unwrap_or(0);
        let r = kin.origin[k] - kin.origin[p];
        let fk = force[k];
        force[p] += fk;
        let mk = moment[k];
        moment[p] += mk + r.cross(&fk);
    }
    out.fixed_rows_mut::<3>(0).copy_from(&force[0]);
    out.fixed_rows_mut::<3>(3).copy_from(&moment[0]);
    out
}

pub fn inverse_dynamics(
    model: &RobotModel,
    state: &GeneralizedState,
    acceleration: &DVector<f64>,
    env: &GravityEnv,
) -> Result<DVector<f64>> {
    state.check(model)?;
    check_len("acceleration", acceleration, model.nv())?;
    let kin = Kinematics::new(model, state);
    Ok(inverse_dynamics_kin(model, &kin, &state.velocity, acceleration, &env.vector()))
}

/// Coriolis and centrifugal generalized forces `b(q, q̇)`.
pub fn bias_forces(model: &RobotModel, state: &GeneralizedState) -> Result<DVector<f64>> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    Ok(bias_forces_kin(model, &kin, &state.velocity))
}

pub fn bias_forces_kin(model: &RobotModel, kin: &Kinematics, v: &DVector<f64>) -> DVector<f64> {
    if v.iter().all(|&x| x == 0.0) {
        return DVector::zeros(model.nv());
    }
    inverse_dynamics_kin(model, kin, v, &DVector::zeros(model.nv()), &Vector3::zeros())
}

/// Gravitational generalized forces `g(q)`, the configuration gradient of the
/// potential energy.
pub fn gravity_forces(model: &RobotModel, state: &GeneralizedState, env: &GravityEnv) -> Result<DVector<f64>> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    Ok(gravity_forces_kin(model, &kin, env))
}

pub fn gravity_forces_kin(model: &RobotModel, kin: &Kinematics, env: &GravityEnv) -> DVector<f64> {
    // g(q) = Σ J_com,kᵀ (m_k g ẑ), accumulated directly.
    let mut out = DVector::zeros(model.nv());
    if env.g == 0.0 {
        return out;
    }
    for (k, link) in model.links.iter().enumerate() {
        if link.mass == 0.0 {
            continue;
        }
        let f = Vector3::new(0.0, 0.0, link.mass * env.g);
        add_point_force(model, kin, k, &kin.com[k], &f, &mut out);
    }
    out
}

/// Adds `Jᵀ f` for a force `f` applied at `world_point` on `link`.
pub fn add_point_force(
    model: &RobotModel,
    kin: &Kinematics,
    link: usize,
    world_point: &Vector3<f64>,
    f: &Vector3<f64>,
    out: &mut DVector<f64>,
) {
    let r = world_point - kin.origin[0];
    let m = r.cross(f);
    for i in 0..3 {
        out[i] += f[i];
        out[3 + i] += m[i];
    }
    for &k in model.chain(link) {
        out[5 + k] += kin.axis[k].dot(&(world_point - kin.origin[k]).cross(f));
    }
}

/// Total potential energy relative to z = 0.
pub fn potential_energy(model: &RobotModel, state: &GeneralizedState, env: &GravityEnv) -> f64 {
    let kin = Kinematics::new(model, state);
    model
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| l.mass * env.g * kin.com[k].z)
        .sum()
}

pub fn kinetic_energy(model: &RobotModel, state: &GeneralizedState) -> Result<f64> {
    let m = mass_matrix(model, state)?;
    Ok(0.5 * state.velocity.dot(&(&m * &state.velocity)))
}

/// 3×nv Jacobian mapping generalized velocity to world foot-point velocity.
pub fn contact_jacobian(model: &RobotModel, state: &GeneralizedState, foot_index: usize) -> Result<DMatrix<f64>> {
    state.check(model)?;
    let foot = model.feet.get(foot_index).ok_or(Error::Index {
        what: "foot",
        index: foot_index,
        len: model.feet.len(),
    })?;
    let kin = Kinematics::new(model, state);
    let p = kin.point(foot.link, &foot.point);
    Ok(kin.point_jacobian(model, foot.link, &p))
}

/// Solves the equation of motion for `q̈`.
///
/// `tau` holds joint torques in entries `6..` and an external base wrench
/// (force, moment about the base origin) in entries `0..6`. `contact_forces`
/// is either empty or one world-frame force per foot.
pub fn forward_dynamics(
    model: &RobotModel,
    state: &GeneralizedState,
    tau: &DVector<f64>,
    contact_forces: &[Vector3<f64>],
    env: &GravityEnv,
) -> Result<DVector<f64>> {
    forward_dynamics_mode(model, state, tau, contact_forces, env, BaseMode::Floating)
}

pub fn forward_dynamics_mode(
    model: &RobotModel,
    state: &GeneralizedState,
    tau: &DVector<f64>,
    contact_forces: &[Vector3<f64>],
    env: &GravityEnv,
    mode: BaseMode,
) -> Result<DVector<f64>> {
    state.check(model)?;
    check_len("tau", tau, model.nv())?;
    if !tau.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("tau"));
    }
    if !contact_forces.is_empty() && contact_forces.len() != model.feet.len() {
        return Err(Error::Dimension {
            what: "contact forces",
            expected: model.feet.len(),
            actual: contact_forces.len(),
        });
    }
    if !contact_forces.iter().all(|f| f.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("contact forces"));
    }
    let kin = Kinematics::new(model, state);
    let mut rhs = tau - bias_forces_kin(model, &kin, &state.velocity) - gravity_forces_kin(model, &kin, env);
    for (foot, f) in model.feet.iter().zip(contact_forces) {
        let p = kin.point(foot.link, &foot.point);
        add_point_force(model, &kin, foot.link, &p, f, &mut rhs);
    }
    let m = mass_matrix_kin(model, &kin);
    solve_acceleration(m, rhs, mode)
}

/// Solves `M a = rhs`, optionally with the base block held at zero.
pub fn solve_acceleration(m: DMatrix<f64>, rhs: DVector<f64>, mode: BaseMode) -> Result<DVector<f64>> {
    let nv = m.nrows();
    match mode {
        BaseMode::Floating => {
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::Model("mass matrix is not positive definite".into()))?;
            let a = chol.solve(&rhs);
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("acceleration"));
            }
            Ok(a)
        }
        BaseMode::Clamped => {
            let nj = nv - 6;
            let mut a = DVector::zeros(nv);
            if nj == 0 {
                return Ok(a);
            }
            let block = m.view((6, 6), (nj, nj)).into_owned();
            let chol = block
                .cholesky()
                .ok_or_else(|| Error::Model("joint mass matrix is not positive definite".into()))?;
            let aj = chol.solve(&rhs.rows(6, nj).into_owned());
            a.rows_mut(6, nj).copy_from(&aj);
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("acceleration"));
            }
            Ok(a)
        }
    }
}

/// Semi-implicit Euler step: `v ← v + a·dt`, then `q ← q ⊕ v·dt`.
pub fn integrate(state: &GeneralizedState, acceleration: &DVector<f64>, dt: f64) -> Result<GeneralizedState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if acceleration.len() != state.nv() {
        return Err(Error::Dimension {
            what: "acceleration",
            expected: state.nv(),
            actual: acceleration.len(),
        });
    }
    let mut next = state.clone();
    next.velocity += acceleration * dt;
    let v = next.velocity.clone();
    next.retract(&v, dt);
    Ok(next)
}

/// Joint torques that statically hold the legs against gravity, excluding the
/// base weight: the joint rows of `g(q)`.
pub fn leg_gravity_compensation(model: &RobotModel, state: &GeneralizedState, env: &GravityEnv) -> Result<DVector<f64>> {
    let g = gravity_forces(model, state, env)?;
    Ok(g.rows(6, model.joint_count()).into_owned())
}

pub fn leg_gravity_compensation_kin(model: &RobotModel, kin: &Kinematics, env: &GravityEnv) -> DVector<f64> {
    let mut out = DVector::zeros(model.joint_count());
    if env.g == 0.0 {
        return out;
    }
    for k in 1..model.links.len() {
        let link = &model.links[k];
        if link.mass == 0.0 {
            continue;
        }
        let f = Vector3::new(0.0, 0.0, link.mass * env.g);
        for &c in model.chain(k) {
            out[c - 1] += kin.axis[c].dot(&(kin.com[k] - kin.origin[c]).cross(&f));
        }
    }
    out
}

fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}
