use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::model::RobotModel;
use crate::error::{Error, Result};

/// Earth gravity, m/s².
pub const EARTH_GRAVITY: f64 = 9.81;

/// Configuration and velocity of a floating-base robot.
///
/// Base linear velocity is the world-frame velocity of the base origin and the
/// base angular velocity is expressed in the world frame. Quaternions are
/// stored scalar-last when serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub joint_positions: DVector<f64>,
    /// `[v_base (3), ω_base (3), q̇ (n)]`.
    pub velocity: DVector<f64>,
}

impl GeneralizedState {
    pub fn new(model: &RobotModel) -> Self {
        GeneralizedState {
            base_position: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            joint_positions: DVector::from_vec(model.default_joint_positions()),
            velocity: DVector::zeros(model.nv()),
        }
    }

    pub fn nv(&self) -> usize {
        self.velocity.len()
    }

    pub fn base_linear_velocity(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(0).into_owned()
    }

    pub fn base_angular_velocity(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(3).into_owned()
    }

    pub fn set_base_linear_velocity(&mut self, v: Vector3<f64>) {
        self.velocity.fixed_rows_mut::<3>(0).copy_from(&v);
    }

    pub fn set_base_angular_velocity(&mut self, w: Vector3<f64>) {
        self.velocity.fixed_rows_mut::<3>(3).copy_from(&w);
    }

    pub fn joint_velocities(&self) -> nalgebra::DVectorView<'_, f64> {
        self.velocity.rows(6, self.velocity.len() - 6)
    }

    /// Scalar-last `[x, y, z, w]`.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let c = self.base_orientation.coords;
        [c[0], c[1], c[2], c[3]]
    }

    pub fn set_quaternion_xyzw(&mut self, q: [f64; 4]) {
        self.base_orientation = UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]));
    }

    pub fn check(&self, model: &RobotModel) -> Result<()> {
        if self.joint_positions.len() != model.joint_count() {
            return Err(Error::Dimension {
                what: "joint positions",
                expected: model.joint_count(),
                actual: self.joint_positions.len(),
            });
        }
        if self.velocity.len() != model.nv() {
            return Err(Error::Dimension {
                what: "generalized velocity",
                expected: model.nv(),
                actual: self.velocity.len(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("generalized state"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.base_orientation.coords.iter().all(|v| v.is_finite())
            && self.joint_positions.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
    }

    /// Moves the configuration along a tangent vector: `q ⊕ scale·delta`.
    ///
    /// Orientation uses the exponential map of the world-frame rotation vector.
    pub fn retract(&mut self, delta: &DVector<f64>, scale: f64) {
        self.base_position += delta.fixed_rows::<3>(0) * scale;
        let rot = delta.fixed_rows::<3>(3) * scale;
        let dq = UnitQuaternion::from_scaled_axis(rot);
        let q = dq * self.base_orientation;
        self.base_orientation = UnitQuaternion::new_normalize(q.into_inner());
        let n = self.joint_positions.len();
        for j in 0..n {
            self.joint_positions[j] += delta[6 + j] * scale;
        }
    }
}

/// Uniform gravity field acting along world −z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityEnv {
    pub g: f64,
}

impl GravityEnv {
    pub const MOON: f64 = 1.62;
    pub const MARS: f64 = 3.73;
    pub const EARTH: f64 = EARTH_GRAVITY;
    pub const SUPER_EARTH: f64 = 19.62;
    /// Value printed in the results table for the same body.
    pub const SUPER_EARTH_TABLE: f64 = 19.96;

    pub fn new(g: f64) -> Result<Self> {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::Config(format!("gravity must be finite and non-negative, got {g}")));
        }
        Ok(GravityEnv { g })
    }

    pub fn earth() -> Self {
        GravityEnv { g: EARTH_GRAVITY }
    }

    /// Gravitational acceleration vector in the world frame.
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.g)
    }

    /// Parses a preset name or a number in m/s².
    pub fn parse(text: &str) -> Result<Self> {
        let g = match text.trim().to_ascii_lowercase().as_str() {
            "moon" => Self::MOON,
            "mars" => Self::MARS,
            "earth" => Self::EARTH,
            "super-earth" | "superearth" => Self::SUPER_EARTH,
            "super-earth-table" => Self::SUPER_EARTH_TABLE,
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("unknown gravity '{text}'")))?,
        };
        if g <= 0.0 {
            return Err(Error::Config(format!("gravity must be positive, got {g}")));
        }
        Self::new(g)
    }

    pub fn label(g: f64) -> String {
        let named = [
            (Self::MOON, "Moon"),
            (Self::MARS, "Mars"),
            (Self::EARTH, "Earth"),
            (Self::SUPER_EARTH, "Super-Earth"),
            (Self::SUPER_EARTH_TABLE, "Super-Earth"),
        ];
        named
            .iter()
            .find(|(v, _)| (v - g).abs() < 1e-9)
            .map(|(_, n)| n.to_string())
            .unwrap_or_else(|| format!("{g} m/s²"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        assert_eq!(GravityEnv::parse("moon").unwrap().g, 1.62);
        assert_eq!(GravityEnv::parse("Super-Earth").unwrap().g, 19.62);
        assert_eq!(GravityEnv::parse("super-earth-table").unwrap().g, 19.96);
        assert_eq!(GravityEnv::parse("3.73").unwrap().g, 3.73);
        assert!(GravityEnv::parse("-1").is_err());
        assert!(GravityEnv::parse("0").is_err());
        assert!(GravityEnv::parse("pluto").is_err());
    }

    #[test]
    fn quaternion_is_scalar_last() {
        let model = RobotModel::reference();
        let mut s = GeneralizedState::new(&model);
        assert_eq!(s.quaternion_xyzw(), [0.0, 0.0, 0.0, 1.0]);
        s.set_quaternion_xyzw([0.0, 0.0, 1.0, 0.0]);
        let r = s.base_orientation * Vector3::x();
        assert!((r - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }
}
