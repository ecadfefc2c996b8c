//! Kinematic tree description of a floating-base robot.
//!
//! Link 0 is the floating base. Every other link hangs off its parent through a
//! single revolute joint, so joint `j` drives link `j + 1` and the generalized
//! velocity has `6 + links.len() - 1` entries: base linear, base angular, joints.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_JOINT_DAMPING: f64 = 0.1;
pub const DEFAULT_JOINT_ARMATURE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Unit rotation axis in the joint (child link) frame.
    pub axis: Vector3<f64>,
    /// Joint frame translation in the parent link frame.
    pub origin_translation: Vector3<f64>,
    /// Joint frame rotation relative to the parent link frame.
    pub origin_rotation: Matrix3<f64>,
    pub lower: f64,
    pub upper: f64,
    pub velocity_limit: f64,
    pub default_position: f64,
    /// Viscous damping, N·m·s/rad.
    pub damping: f64,
    /// Reflected rotor inertia added to the joint diagonal, kg·m².
    pub armature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub mass: f64,
    /// Inertia about the link COM, expressed in the link frame.
    pub inertia: Matrix3<f64>,
    pub com: Vector3<f64>,
    pub joint: Option<Joint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Foot {
    pub name: String,
    pub link: usize,
    pub point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub feet: Vec<Foot>,
    pub leg_length: f64,
    total_mass: f64,
    /// For every link, the joint-carrying links from the root down to itself.
    chains: Vec<Vec<usize>>,
}

impl RobotModel {
    pub fn new(name: impl Into<String>, links: Vec<Link>, feet: Vec<Foot>, leg_length: f64) -> Result<Self> {
        let mut model = RobotModel {
            name: name.into(),
            links,
            feet,
            leg_length,
            total_mass: 0.0,
            chains: Vec::new(),
        };
        model.rebuild()?;
        Ok(model)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.validate()?;
        self.total_mass = self.links.iter().map(|l| l.mass).sum();
        self.chains = (0..self.links.len())
            .map(|k| {
                let mut chain = Vec::new();
                let mut cur = k;
                while cur != 0 {
                    chain.push(cur);
                    cur = self.links[cur].parent.unwrap_or(0);
                }
                chain.reverse();
                chain
            })
            .collect();
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::Model("model has no links".into()));
        }
        if self.links[0].parent.is_some() || self.links[0].joint.is_some() {
            return Err(Error::Model("link 0 must be the floating base".into()));
        }
        for (k, link) in self.links.iter().enumerate() {
            if !(link.mass.is_finite() && link.mass >= 0.0) {
                return Err(Error::Model(format!("link {} has invalid mass", link.name)));
            }
            check_inertia(&link.name, link.mass, &link.inertia)?;
            if k == 0 {
                continue;
            }
            match link.parent {
                Some(p) if p < k => {}
                _ => {
                    return Err(Error::Model(format!(
                        "link {} must have a parent listed before it",
                        link.name
                    )))
                }
            }
            let joint = link
                .joint
                .as_ref()
                .ok_or_else(|| Error::Model(format!("link {} has no joint", link.name)))?;
            if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Model(format!("joint {} axis is not unit length", joint.name)));
            }
            if joint.lower > joint.upper || joint.velocity_limit <= 0.0 {
                return Err(Error::Model(format!("joint {} has invalid limits", joint.name)));
            }
            if joint.damping < 0.0 || joint.armature < 0.0 {
                return Err(Error::Model(format!("joint {} has negative damping or armature", joint.name)));
            }
        }
        if self.links[0].mass <= 0.0 {
            return Err(Error::Model("base link must have positive mass".into()));
        }
        for foot in &self.feet {
            if foot.link >= self.links.len() {
                return Err(Error::Model(format!("foot {} references a missing link", foot.name)));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn joint_count(&self) -> usize {
        self.links.len() - 1
    }

    /// Generalized velocity dimension.
    pub fn nv(&self) -> usize {
        6 + self.joint_count()
    }

    pub fn joint(&self, j: usize) -> &Joint {
        self.links[j + 1].joint.as_ref().expect("non-base link carries a joint")
    }

    pub fn joints(&self) -> impl Iterator<Item = &Joint> {
        self.links[1..].iter().filter_map(|l| l.joint.as_ref())
    }

    pub fn default_joint_positions(&self) -> Vec<f64> {
        self.joints().map(|j| j.default_position).collect()
    }

    /// Joint-carrying links from the root to `link`, inclusive.
    pub fn chain(&self, link: usize) -> &[usize] {
        &self.chains[link]
    }

    /// Adds `delta` kg to the base, scaling its inertia with the mass.
    pub fn with_added_base_mass(&self, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        let base = &mut out.links[0];
        let new_mass = base.mass + delta;
        if new_mass <= 0.0 {
            return Err(Error::Model(format!("base mass would become {new_mass}")));
        }
        base.inertia *= new_mass / base.mass;
        base.mass = new_mass;
        out.rebuild()?;
        Ok(out)
    }

    /// Structural check for the four-legged, three-joints-per-leg layout.
    pub fn validate_quadruped(&self) -> Result<()> {
        if self.joint_count() != 12 {
            return Err(Error::Model(format!("expected 12 joints, found {}", self.joint_count())));
        }
        if self.feet.len() != 4 {
            return Err(Error::Model(format!("expected 4 feet, found {}", self.feet.len())));
        }
        for (leg, foot) in self.feet.iter().enumerate() {
            let chain = self.chain(foot.link);
            let expected: Vec<usize> = (1..=3).map(|i| leg * 3 + i).collect();
            if chain != expected.as_slice() {
                return Err(Error::Model(format!(
                    "leg {leg} must be the chain of joints {}..{}",
                    leg * 3,
                    leg * 3 + 2
                )));
            }
        }
        Ok(())
    }

    pub fn to_config(&self) -> RobotConfig {
        let links = self
            .links
            .iter()
            .map(|l| LinkConfig {
                name: l.name.clone(),
                parent: l.parent.map(|p| self.links[p].name.clone()),
                mass: l.mass,
                com: l.com.into(),
                inertia: [
                    l.inertia[(0, 0)],
                    l.inertia[(1, 1)],
                    l.inertia[(2, 2)],
                    l.inertia[(0, 1)],
                    l.inertia[(0, 2)],
                    l.inertia[(1, 2)],
                ],
                joint: l.joint.as_ref().map(|j| {
                    let (r, p, y) = Rotation3::from_matrix_unchecked(j.origin_rotation).euler_angles();
                    JointConfig {
                        name: j.name.clone(),
                        axis: j.axis.into(),
                        xyz: j.origin_translation.into(),
                        rpy: [r, p, y],
                        limits: [j.lower, j.upper],
                        velocity_limit: j.velocity_limit,
                        default: j.default_position,
                        damping: j.damping,
                        armature: j.armature,
                    }
                }),
            })
            .collect();
        RobotConfig {
            name: self.name.clone(),
            leg_length: self.leg_length,
            links,
            feet: self
                .feet
                .iter()
                .map(|f| FootConfig {
                    name: f.name.clone(),
                    link: self.links[f.link].name.clone(),
                    point: f.point.into(),
                })
                .collect(),
        }
    }

    pub fn from_config(cfg: &RobotConfig) -> Result<Self> {
        let index_of = |name: &str, upto: usize| -> Result<usize> {
            cfg.links[..upto]
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| Error::Model(format!("unknown link {name}")))
        };
        let mut links = Vec::with_capacity(cfg.links.len());
        for (k, lc) in cfg.links.iter().enumerate() {
            let parent = match &lc.parent {
                Some(p) => Some(index_of(p, k)?),
                None => None,
            };
            let [ixx, iyy, izz, ixy, ixz, iyz] = lc.inertia;
            let inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
            let joint = match &lc.joint {
                Some(jc) => {
                    let axis = Vector3::from(jc.axis);
                    let n = axis.norm();
                    if n < 1e-12 {
                        return Err(Error::Model(format!("joint {} has a zero axis", jc.name)));
                    }
                    Some(Joint {
                        name: jc.name.clone(),
                        axis: axis / n,
                        origin_translation: jc.xyz.into(),
                        origin_rotation: Rotation3::from_euler_angles(jc.rpy[0], jc.rpy[1], jc.rpy[2]).into_inner(),
                        lower: jc.limits[0],
                        upper: jc.limits[1],
                        velocity_limit: jc.velocity_limit,
                        default_position: jc.default,
                        damping: jc.damping,
                        armature: jc.armature,
                    })
                }
                None => None,
            };
            links.push(Link {
                name: lc.name.clone(),
                parent,
                mass: lc.mass,
                inertia,
                com: lc.com.into(),
                joint,
            });
        }
        let feet = cfg
            .feet
            .iter()
            .map(|f| {
                Ok(Foot {
                    name: f.name.clone(),
                    link: index_of(&f.link, cfg.links.len())?,
                    point: f.point.into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobotModel::new(cfg.name.clone(), links, feet, cfg.leg_length)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RobotConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }
}

fn check_inertia(name: &str, mass: f64, inertia: &Matrix3<f64>) -> Result<()> {
    if !inertia.iter().all(|v| v.is_finite()) {
        return Err(Error::Model(format!("link {name} inertia is not finite")));
    }
    if (inertia - inertia.transpose()).amax() > 1e-12 {
        return Err(Error::Model(format!("link {name} inertia is not symmetric")));
    }
    if mass == 0.0 && inertia.amax() == 0.0 {
        return Ok(());
    }
    let eig = inertia.symmetric_eigenvalues();
    if eig.iter().any(|&e| e <= 0.0) {
        return Err(Error::Model(format!("link {name} inertia is not positive definite")));
    }
    let (a, b, c) = (eig[0], eig[1], eig[2]);
    let slack = 1e-12 * (a + b + c);
    if a + b + slack < c || a + c + slack < b || b + c + slack < a {
        return Err(Error::Model(format!("link {name} inertia violates the triangle inequality")));
    }
    Ok(())
}

/// Rotation matrix of a revolute joint at angle `q`.
pub(crate) fn axis_rotation(axis: &Vector3<f64>, q: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), q).into_inner()
}

/// On-disk robot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub name: String,
    pub leg_length: f64,
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub feet: Vec<FootConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the COM.
    pub inertia: [f64; 6],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub name: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub limits: [f64; 2],
    pub velocity_limit: f64,
    #[serde(default)]
    pub default: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_armature")]
    pub armature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootConfig {
    pub name: String,
    pub link: String,
    #[serde(default)]
    pub point: [f64; 3],
}

fn default_damping() -> f64 {
    DEFAULT_JOINT_DAMPING
}

fn default_armature() -> f64 {
    DEFAULT_JOINT_ARMATURE
}
