//! The reference quadruped: a 15.65 kg insect-style robot with four identical
//! hip-yaw / hip-pitch / knee legs splayed diagonally from a square base.
//!
//! Legs are ordered left-front, right-front, left-hind, right-hind. The model
//! is mirror symmetric about the body x-z and y-z planes, which the symmetry
//! transforms in `env::symmetry` rely on.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{Matrix3, Vector3};

use super::model::{Foot, Joint, Link, RobotModel, DEFAULT_JOINT_ARMATURE, DEFAULT_JOINT_DAMPING};

pub const LEG_NAMES: [&str; 4] = ["lf", "rf", "lh", "rh"];
/// (x sign, y sign) of each hip on the base.
pub const LEG_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

pub const BASE_SIZE: [f64; 3] = [0.35, 0.35, 0.12];
pub const BASE_MASS: f64 = 8.25;
pub const HIP_MASS: f64 = 0.56;
pub const THIGH_MASS: f64 = 0.80;
pub const SHANK_MASS: f64 = 0.49;

pub const HIP_OFFSET: f64 = 0.05;
pub const THIGH_LENGTH: f64 = 0.20;
pub const SHANK_LENGTH: f64 = 0.25;

pub const DEFAULT_HIP_YAW: f64 = 0.0;
pub const DEFAULT_HIP_PITCH: f64 = 0.2;
/// Puts the shank vertical at the default hip pitch.
pub const DEFAULT_KNEE: f64 = std::f64::consts::FRAC_PI_2 - DEFAULT_HIP_PITCH;

fn box_inertia(m: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        m * (y * y + z * z) / 12.0,
        m * (x * x + z * z) / 12.0,
        m * (x * x + y * y) / 12.0,
    ))
}

/// Slender link of length `l` along its local x axis.
fn rod_inertia(m: f64, l: f64, r: f64) -> Matrix3<f64> {
    let axial = 0.5 * m * r * r;
    let transverse = m * (3.0 * r * r + l * l) / 12.0;
    Matrix3::from_diagonal(&Vector3::new(axial, transverse, transverse))
}

fn joint(name: String, axis: Vector3<f64>, xyz: Vector3<f64>, yaw: f64, limits: (f64, f64), default: f64) -> Joint {
    Joint {
        name,
        axis,
        origin_translation: xyz,
        origin_rotation: super::model::axis_rotation(&Vector3::z(), yaw),
        lower: limits.0,
        upper: limits.1,
        velocity_limit: 12.0,
        default_position: default,
        damping: DEFAULT_JOINT_DAMPING,
        armature: DEFAULT_JOINT_ARMATURE,
    }
}

impl RobotModel {
    pub fn reference() -> RobotModel {
        let [bx, by, bz] = BASE_SIZE;
        let mut links = vec![Link {
            name: "base".into(),
            parent: None,
            mass: BASE_MASS,
            inertia: box_inertia(BASE_MASS, bx, by, bz),
            com: Vector3::zeros(),
            joint: None,
        }];
        let mut feet = Vec::new();
        for (leg, (&name, &(sx, sy))) in LEG_NAMES.iter().zip(LEG_SIGNS.iter()).enumerate() {
            // Leg frame x points diagonally outward from the base centre.
            let yaw = sy * if sx > 0.0 { FRAC_PI_4 } else { 3.0 * FRAC_PI_4 };
            let hip = 1 + 3 * leg;
            links.push(Link {
                name: format!("{name}_hip"),
                parent: Some(0),
                mass: HIP_MASS,
                inertia: rod_inertia(HIP_MASS, HIP_OFFSET, 0.04),
                com: Vector3::new(0.5 * HIP_OFFSET, 0.0, 0.0),
                joint: Some(joint(
                    format!("{name}_hip_yaw"),
                    Vector3::z(),
                    Vector3::new(sx * 0.5 * bx, sy * 0.5 * by, 0.0),
                    yaw,
                    (-0.8, 0.8),
                    DEFAULT_HIP_YAW,
                )),
            });
            links.push(Link {
                name: format!("{name}_thigh"),
                parent: Some(hip),
                mass: THIGH_MASS,
                inertia: rod_inertia(THIGH_MASS, THIGH_LENGTH, 0.025),
                com: Vector3::new(0.5 * THIGH_LENGTH, 0.0, 0.0),
                joint: Some(joint(
                    format!("{name}_hip_pitch"),
                    Vector3::y(),
                    Vector3::new(HIP_OFFSET, 0.0, 0.0),
                    0.0,
                    (-1.6, 1.6),
                    DEFAULT_HIP_PITCH,
                )),
            });
            links.push(Link {
                name: format!("{name}_shank"),
                parent: Some(hip + 1),
                mass: SHANK_MASS,
                inertia: rod_inertia(SHANK_MASS, SHANK_LENGTH, 0.015),
                com: Vector3::new(0.5 * SHANK_LENGTH, 0.0, 0.0),
                joint: Some(joint(
                    format!("{name}_knee"),
                    Vector3::y(),
                    Vector3::new(THIGH_LENGTH, 0.0, 0.0),
                    0.0,
                    (-0.5, 2.6),
                    DEFAULT_KNEE,
                )),
            });
            feet.push(Foot {
                name: format!("{name}_foot"),
                link: hip + 2,
                point: Vector3::new(SHANK_LENGTH, 0.0, 0.0),
            });
        }
        RobotModel::new(
            "reference-quadruped",
            links,
            feet,
            HIP_OFFSET + THIGH_LENGTH + SHANK_LENGTH,
        )
        .expect("reference model is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_mass_budget() {
        let m = RobotModel::reference();
        assert!((m.total_mass() - 15.65).abs() < 1e-9);
        let sum: f64 = m.links.iter().map(|l| l.mass).sum();
        assert!((m.total_mass() - sum).abs() < 1e-9);
        let base_and_hips: f64 = m
            .links
            .iter()
            .filter(|l| l.name == "base" || l.name.ends_with("_hip"))
            .map(|l| l.mass)
            .sum();
        let share = base_and_hips / m.total_mass();
        assert!(share >= 0.60, "share {share}");
        assert!((share - 0.67).abs() < 0.005);
        assert!((m.leg_length - 0.5).abs() < 1e-12);
        m.validate_quadruped().unwrap();
    }

    #[test]
    fn config_round_trip() {
        let m = RobotModel::reference();
        let text = toml::to_string(&m.to_config()).unwrap();
        let back = RobotModel::from_toml_str(&text).unwrap();
        assert_eq!(back.links.len(), m.links.len());
        for (a, b) in m.links.iter().zip(&back.links) {
            assert!((a.mass - b.mass).abs() < 1e-12);
            assert!((a.inertia - b.inertia).amax() < 1e-12);
            if let (Some(ja), Some(jb)) = (&a.joint, &b.joint) {
                assert!((ja.origin_rotation - jb.origin_rotation).amax() < 1e-12);
                assert!((ja.origin_translation - jb.origin_translation).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inertia() {
        let mut cfg = RobotModel::reference().to_config();
        cfg.links[1].inertia = [1.0, 0.1, 0.1, 0.0, 0.0, 0.0];
        let err = RobotModel::from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("triangle"), "{err}");
        cfg.links[1].inertia = [-1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert!(RobotModel::from_config(&cfg).is_err());
    }
}
