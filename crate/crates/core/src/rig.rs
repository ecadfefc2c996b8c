//! Constant-force-spring gravity offload rig.
//!
//! A rope from an overhead gantry pulls the base up with a constant tension
//! `F`. When the gantry lags the robot by a horizontal distance `r`, the rope
//! tilts and the tension splits into
//!
//! ```text
//! F_z = F · h / √(r² + h²)        (vertical error  F − F_z)
//! F_r = F · r / √(r² + h²)        (radial error)
//! ```
//!
//! where `h` is the mount height above the attachment point.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::EARTH_GRAVITY;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    /// Spring tension, N.
    pub spring_force: f64,
    /// Vertical rope length above the attachment point, m.
    pub mount_height: f64,
    /// Attachment point in the base frame, m.
    pub attachment: [f64; 3],
    /// Largest horizontal gantry lag, m.
    pub r_max: f64,
    /// First-order gantry tracking time constant, s.
    pub gantry_time_constant: f64,
    /// Spring travel; the rope goes slack when the attachment rises more than
    /// half of it above the height at reset, m.
    pub stroke: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            spring_force: 117.2,
            mount_height: 1.9,
            attachment: [0.0; 3],
            r_max: 0.15,
            gantry_time_constant: 0.5,
            stroke: 0.4,
        }
    }
}

impl RigSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spring_force > 0.0 && self.mount_height > 0.0 && self.r_max >= 0.0) {
            return Err(Error::Config(
                "rig needs a positive spring force and mount height and a non-negative r_max".into(),
            ));
        }
        if !(self.gantry_time_constant > 0.0 && self.stroke > 0.0) {
            return Err(Error::Config("rig gantry time constant and stroke must be positive".into()));
        }
        Ok(())
    }
}

/// Offload force making `mass` weigh as much at Earth gravity as it would at
/// `g_target`.
pub fn required_offload(mass: f64, g_target: f64) -> Result<f64> {
    if !(g_target > 0.0 && g_target <= EARTH_GRAVITY) {
        return Err(Error::Config(format!(
            "offload target gravity must lie in (0, {EARTH_GRAVITY}], got {g_target}"
        )));
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Config(format!("mass must be positive, got {mass}")));
    }
    Ok(mass * (EARTH_GRAVITY - g_target))
}

pub fn vertical_error(rig: &RigSpec, r: f64) -> f64 {
    rig.spring_force * (1.0 - rig.mount_height / r.hypot(rig.mount_height))
}

pub fn radial_error(rig: &RigSpec, r: f64) -> f64 {
    rig.spring_force * r / r.hypot(rig.mount_height)
}

/// Vertical component of the rope tension.
pub fn vertical_force(rig: &RigSpec, r: f64) -> f64 {
    rig.spring_force * rig.mount_height / r.hypot(rig.mount_height)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigPlan {
    pub mass: f64,
    pub target_gravity: f64,
    pub required_offload: f64,
    pub measured_offload: f64,
    pub deficit: f64,
    pub battery_mass: f64,
    pub battery_credit: f64,
    pub residual: f64,
    /// Mass added to the simulated robot so the residual is trained for.
    pub added_mass: f64,
}

/// Closes the force budget between the rig's measured offload and the offload
/// the target gravity needs: removing the battery covers part of the deficit
/// and the rest is emulated as extra simulated mass.
pub fn plan_compensation(mass: f64, g_target: f64, measured_offload: f64, battery_mass: f64) -> Result<RigPlan> {
    let required = required_offload(mass, g_target)?;
    if !(measured_offload.is_finite() && measured_offload >= 0.0) {
        return Err(Error::Config(format!("measured offload must be non-negative, got {measured_offload}")));
    }
    if !(battery_mass.is_finite() && battery_mass >= 0.0 && battery_mass < mass) {
        return Err(Error::Config(format!(
            "battery mass must lie in [0, {mass}) kg, got {battery_mass}"
        )));
    }
    if measured_offload > required + 1e-9 {
        return Err(Error::InfeasiblePlan(format!(
            "measured offload {measured_offload:.2} N exceeds the required {required:.2} N; the rig over-compensates"
        )));
    }
    let deficit = (required - measured_offload).max(0.0);
    let credit = battery_mass * EARTH_GRAVITY;
    let residual = deficit - credit;
    if residual < -1e-9 {
        return Err(Error::InfeasiblePlan(format!(
            "removing {battery_mass} kg credits {credit:.2} N, more than the {deficit:.2} N deficit"
        )));
    }
    let residual = residual.max(0.0);
    Ok(RigPlan {
        mass,
        target_gravity: g_target,
        required_offload: required,
        measured_offload,
        deficit,
        battery_mass,
        battery_credit: credit,
        residual,
        added_mass: residual / g_target,
    })
}

/// Gantry and rope state of a running rig.
#[derive(Debug, Clone, PartialEq)]
pub struct RigRuntime {
    pub spec: RigSpec,
    /// Horizontal gantry position.
    pub gantry: [f64; 2],
    /// Attachment height at reset.
    pub nominal_height: f64,
    pub slack: bool,
    pub slack_events: usize,
    /// Largest horizontal force seen, N.
    pub max_radial_force: f64,
}

impl RigRuntime {
    pub fn new(spec: RigSpec, attachment_world: &Vector3<f64>) -> Self {
        RigRuntime {
            spec,
            gantry: [attachment_world.x, attachment_world.y],
            nominal_height: attachment_world.z,
            slack: false,
            slack_events: 0,
            max_radial_force: 0.0,
        }
    }

    /// Advances the gantry by `dt` and returns the rope force on the base.
    pub fn step(&mut self, dt: f64, attachment_world: &Vector3<f64>) -> Vector3<f64> {
        let alpha = 1.0 - (-dt / self.spec.gantry_time_constant).exp();
        let mut dx = attachment_world.x - self.gantry[0];
        let mut dy = attachment_world.y - self.gantry[1];
        self.gantry[0] += alpha * dx;
        self.gantry[1] += alpha * dy;
        dx = attachment_world.x - self.gantry[0];
        dy = attachment_world.y - self.gantry[1];
        let r = dx.hypot(dy);
        if r > self.spec.r_max {
            let k = if r > 0.0 { self.spec.r_max / r } else { 0.0 };
            self.gantry[0] = attachment_world.x - dx * k;
            self.gantry[1] = attachment_world.y - dy * k;
            dx *= k;
            dy *= k;
        }
        let slack = attachment_world.z > self.nominal_height + 0.5 * self.spec.stroke;
        if slack && !self.slack {
            self.slack_events += 1;
        }
        self.slack = slack;
        if slack {
            return Vector3::zeros();
        }
        let r = dx.hypot(dy);
        let len = r.hypot(self.spec.mount_height);
        let f = self.spec.spring_force / len;
        let force = Vector3::new(-dx * f, -dy * f, self.spec.mount_height * f);
        self.max_radial_force = self.max_radial_force.max(radial_error(&self.spec, r));
        force
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn magnecko() -> RigSpec {
        RigSpec::default()
    }

    #[test]
    fn error_examples() {
        let rig = magnecko();
        assert_eq!(vertical_error(&rig, 0.0), 0.0);
        assert_eq!(radial_error(&rig, 0.0), 0.0);
        let v = vertical_error(&rig, 0.15);
        assert!((0.35..=0.37).contains(&v), "{v}");
        let r = radial_error(&rig, 0.15);
        assert!((r - 9.22).abs() < 0.01, "{r}");
        let tall = RigSpec {
            mount_height: 3.8,
            ..magnecko()
        };
        assert!(vertical_error(&tall, 0.1) < vertical_error(&rig, 0.1));
    }

    #[test]
    fn small_deflection_linearization() {
        let rig = magnecko();
        for i in 1..=10 {
            let r = 0.05 * rig.mount_height * i as f64 / 10.0;
            let lin = rig.spring_force * r / rig.mount_height;
            assert!((radial_error(&rig, r) - lin).abs() <= 0.01 * lin);
        }
    }

    #[test]
    fn offload_examples() {
        assert!((required_offload(15.65, 1.62).unwrap() - 128.2).abs() < 0.1);
        assert_eq!(required_offload(3.0, 9.81).unwrap(), 0.0);
        assert_relative_eq!(required_offload(10.0, 3.73).unwrap(), 60.8, epsilon = 1e-9);
        assert!(required_offload(10.0, 0.0).is_err());
        assert!(required_offload(10.0, 12.0).is_err());
    }

    #[test]
    fn magnecko_plan() {
        let p = plan_compensation(15.65, 1.62, 117.2, 0.8).unwrap();
        assert!((p.deficit - 11.0).abs() < 0.05);
        assert!((7.85..=7.9).contains(&((p.battery_credit * 100.0).round() / 100.0)));
        assert!((p.residual - 3.1).abs() < 0.1);
        assert!((p.added_mass - 1.9).abs() < 0.05);
        assert!((p.measured_offload + p.battery_credit + p.added_mass * 1.62 - p.required_offload).abs() < 0.1);
    }

    #[test]
    fn plan_edge_cases() {
        let required = required_offload(15.65, 1.62).unwrap();
        let p = plan_compensation(15.65, 1.62, required, 0.0).unwrap();
        assert_eq!((p.deficit, p.residual, p.added_mass, p.battery_credit), (0.0, 0.0, 0.0, 0.0));
        let p = plan_compensation(15.65, 1.62, 100.0, 0.0).unwrap();
        assert_relative_eq!(p.added_mass, p.deficit / 1.62, epsilon = 1e-12);
        assert!(matches!(
            plan_compensation(15.65, 1.62, 200.0, 0.0),
            Err(Error::InfeasiblePlan(_))
        ));
        assert!(matches!(
            plan_compensation(15.65, 1.62, 127.0, 0.8),
            Err(Error::InfeasiblePlan(_))
        ));
    }

    #[test]
    fn gantry_lag_is_bounded() {
        let mut rt = RigRuntime::new(magnecko(), &Vector3::new(0.0, 0.0, 0.3));
        let mut worst: f64 = 0.0;
        for k in 0..4000 {
            let t = k as f64 * 0.005;
            let p = Vector3::new(0.8 * t, 0.3 * (2.0 * t).sin(), 0.3);
            let f = rt.step(0.005, &p);
            worst = worst.max(f.xy().norm());
            let r = (p.xy() - Vector3::new(rt.gantry[0], rt.gantry[1], 0.0).xy()).norm();
            assert!(r <= 0.15 + 1e-12);
            assert!((f.norm() - 117.2).abs() < 1e-9);
        }
        assert!(worst <= 9.3 && worst > 9.0, "{worst}");
    }

    #[test]
    fn rope_goes_slack() {
        let mut rt = RigRuntime::new(magnecko(), &Vector3::new(0.0, 0.0, 0.3));
        assert!(rt.step(0.005, &Vector3::new(0.0, 0.0, 0.6)).norm() == 0.0);
        assert_eq!(rt.slack_events, 1);
        assert!(rt.step(0.005, &Vector3::new(0.0, 0.0, 0.3)).z > 0.0);
    }

    /// A lone rigid body under Earth gravity plus the rope tuned to the
    /// required offload accelerates exactly as under lunar gravity.
    #[test]
    fn point_mass_sees_target_gravity() {
        use crate::dynamics::testing::base_link;
        use crate::dynamics::{
            add_point_force, bias_forces_kin, gravity_forces_kin, mass_matrix_kin, solve_acceleration, BaseMode,
            GeneralizedState, GravityEnv, Kinematics, RobotModel,
        };
        let mass = 15.65;
        let model = RobotModel::new("point", vec![base_link(mass)], vec![], 0.0).unwrap();
        let spec = RigSpec {
            spring_force: required_offload(mass, 1.62).unwrap(),
            r_max: 0.0,
            ..magnecko()
        };
        let mut state = GeneralizedState::new(&model);
        state.base_position = Vector3::new(0.0, 0.0, 0.3);
        let mut rt = RigRuntime::new(spec, &state.base_position);
        for k in 0..200 {
            state.base_position.x = 0.01 * k as f64;
            let kin = Kinematics::new(&model, &state);
            let earth = GravityEnv::earth();
            let mut rhs = -bias_forces_kin(&model, &kin, &state.velocity) - gravity_forces_kin(&model, &kin, &earth);
            let f = rt.step(0.005, &state.base_position);
            add_point_force(&model, &kin, 0, &state.base_position, &f, &mut rhs);
            let a = solve_acceleration(mass_matrix_kin(&model, &kin), rhs, BaseMode::Floating).unwrap();
            assert!((a[2] + 1.62).abs() < 1e-6, "{}", a[2]);
            assert!(a[0].abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn tension_decomposition(f in 1.0f64..500.0, h in 0.1f64..5.0, r in 0.0f64..3.0) {
            let rig = RigSpec { spring_force: f, mount_height: h, ..Default::default() };
            let fz = vertical_force(&rig, r);
            let fr = radial_error(&rig, r);
            prop_assert!((fz + vertical_error(&rig, r) - f).abs() <= 1e-9 * f);
            prop_assert!((fz * fz + fr * fr - f * f).abs() <= 1e-9 * f * f);
            prop_assert!(vertical_error(&rig, r + 0.01) >= vertical_error(&rig, r));
        }
    }
}
