//! Penalty contact for point feet: a unilateral spring-damper along the
//! terrain normal plus regularized Coulomb friction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::heightfield::HeightField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    /// Slip speed below which the static coefficient applies, m/s.
    pub stick_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 2.0e4,
            damping: 200.0,
            mu_static: 1.0,
            mu_dynamic: 0.8,
            stick_velocity: 0.01,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0 && self.damping > 0.0 && self.stick_velocity > 0.0) {
            return Err(Error::Config("contact stiffness, damping and stick velocity must be positive".into()));
        }
        if !(self.mu_static >= self.mu_dynamic && self.mu_dynamic >= 0.0) {
            return Err(Error::Config(format!(
                "friction must satisfy mu_static >= mu_dynamic >= 0 (got {} / {})",
                self.mu_static, self.mu_dynamic
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrictionRegime {
    None,
    Stick,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootContact {
    pub in_contact: bool,
    /// Contact began this step (set by [`ContactState::mark_new_contacts`]).
    pub new_contact: bool,
    /// Depth below the surface measured along the normal, m (≤ 0 when above).
    pub penetration: f64,
    pub normal: Vector3<f64>,
    /// World-frame force on the foot, N.
    pub force: Vector3<f64>,
    pub normal_force: f64,
    /// Tangential slip speed, m/s.
    pub slip_speed: f64,
    pub regime: FrictionRegime,
    /// Whether the normal damper is active (unclamped normal force).
    damper_active: bool,
}

impl FootContact {
    fn separated(penetration: f64, normal: Vector3<f64>) -> Self {
        FootContact {
            in_contact: false,
            new_contact: false,
            penetration,
            normal,
            force: Vector3::zeros(),
            normal_force: 0.0,
            slip_speed: 0.0,
            regime: FrictionRegime::None,
            damper_active: false,
        }
    }

    pub fn tangential_force(&self) -> Vector3<f64> {
        self.force - self.normal * self.force.dot(&self.normal)
    }

    /// Velocity gain of the dissipative part of this foot's force, used to
    /// integrate it implicitly. The damper and stick friction contribute
    /// their derivative `−∂F/∂v`; sliding friction contributes its secant
    /// `μ_d·F_n / |v_t|` on the tangent plane, so an implicit step can slow
    /// a slipping foot to rest but never reverse it.
    pub fn damping_matrix(&self, params: &ContactParams) -> Matrix3<f64> {
        let mut d = Matrix3::zeros();
        if !self.in_contact {
            return d;
        }
        let nn = self.normal * self.normal.transpose();
        if self.damper_active {
            d += nn * params.damping;
        }
        match self.regime {
            FrictionRegime::Stick => {
                let gain = params.mu_static * self.normal_force / params.stick_velocity;
                d += (Matrix3::identity() - nn) * gain;
            }
            FrictionRegime::Slip => {
                let gain = params.mu_dynamic * self.normal_force / self.slip_speed;
                d += (Matrix3::identity() - nn) * gain;
            }
            FrictionRegime::None => {}
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactState {
    pub feet: Vec<FootContact>,
}

impl ContactState {
    pub fn none(count: usize) -> Self {
        ContactState {
            feet: vec![FootContact::separated(0.0, Vector3::z()); count],
        }
    }

    pub fn flags(&self) -> Vec<bool> {
        self.feet.iter().map(|f| f.in_contact).collect()
    }

    pub fn forces(&self) -> Vec<Vector3<f64>> {
        self.feet.iter().map(|f| f.force).collect()
    }

    /// Sets `new_contact` on feet that were airborne in `previous`.
    pub fn mark_new_contacts(&mut self, previous: &ContactState) {
        for (i, foot) in self.feet.iter_mut().enumerate() {
            let before = previous.feet.get(i).map(|f| f.in_contact).unwrap_or(false);
            foot.new_contact = foot.in_contact && !before;
        }
    }
}

/// Evaluates the contact force at every foot.
///
/// Normal force is `max(0, k·p − d·v_n)` where `p` is the penetration depth
/// and `v_n` the foot velocity along the outward normal. The tangential force
/// opposes slip: below the stick speed it ramps linearly up to `μ_s·F_n`,
/// above it it equals `μ_d·F_n`.
pub fn contact_forces(
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    field: &HeightField,
    params: &ContactParams,
) -> ContactState {
    let feet = positions
        .iter()
        .zip(velocities)
        .map(|(p, v)| foot_contact(p, v, field, params))
        .collect();
    ContactState { feet }
}

fn foot_contact(p: &Vector3<f64>, v: &Vector3<f64>, field: &HeightField, params: &ContactParams) -> FootContact {
    let normal = field.normal_at(p.x, p.y);
    let penetration = (field.height_at(p.x, p.y) - p.z) * normal.z;
    if penetration <= 0.0 {
        return FootContact::separated(penetration, normal);
    }
    let vn = v.dot(&normal);
    let raw = params.stiffness * penetration - params.damping * vn;
    let fn_ = raw.max(0.0);
    let vt = v - normal * vn;
    let slip = vt.norm();
    let (ft, regime) = if fn_ == 0.0 {
        (Vector3::zeros(), FrictionRegime::None)
    } else if slip < params.stick_velocity {
        (vt * (-params.mu_static * fn_ / params.stick_velocity), FrictionRegime::Stick)
    } else {
        (vt * (-params.mu_dynamic * fn_ / slip), FrictionRegime::Slip)
    };
    FootContact {
        in_contact: true,
        new_contact: false,
        penetration,
        normal,
        force: normal * fn_ + ft,
        normal_force: fn_,
        slip_speed: slip,
        regime,
        damper_active: raw > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactEvent {
    pub foot: usize,
    /// Foot world velocity on the step before touchdown.
    pub velocity: Vector3<f64>,
}

impl ImpactEvent {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Touchdown events: feet whose contact flag went from false to true.
pub fn detect_impacts(
    previous: &ContactState,
    current: &ContactState,
    previous_velocities: &[Vector3<f64>],
) -> Vec<ImpactEvent> {
    current
        .feet
        .iter()
        .enumerate()
        .filter(|(i, f)| f.in_contact && !previous.feet.get(*i).map(|p| p.in_contact).unwrap_or(false))
        .map(|(i, _)| ImpactEvent {
            foot: i,
            velocity: previous_velocities.get(i).copied().unwrap_or_else(Vector3::zeros),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> HeightField {
        HeightField::flat()
    }

    #[test]
    fn above_ground_no_force() {
        let s = contact_forces(&[Vector3::new(0.0, 0.0, 0.01)], &[Vector3::new(0.1, 0.0, -1.0)], &flat(), &ContactParams::default());
        assert!(!s.feet[0].in_contact);
        assert_eq!(s.feet[0].force, Vector3::zeros());
    }

    #[test]
    fn static_penetration_spring_force() {
        let params = ContactParams {
            stiffness: 1e5,
            damping: 1e-12,
            ..Default::default()
        };
        let s = contact_forces(&[Vector3::new(0.3, -0.2, -0.001)], &[Vector3::zeros()], &flat(), &params);
        assert!((s.feet[0].force.z - 100.0).abs() < 1e-9);
        assert!(s.feet[0].in_contact);
    }

    #[test]
    fn slipping_foot_dynamic_cap() {
        let params = ContactParams {
            stiffness: 1e5,
            damping: 1e-12,
            mu_static: 0.9,
            mu_dynamic: 0.5,
            ..Default::default()
        };
        let v = Vector3::new(0.3, 0.4, 0.0);
        let s = contact_forces(&[Vector3::new(0.0, 0.0, -0.001)], &[v], &flat(), &params);
        let ft = s.feet[0].tangential_force();
        assert!((ft.norm() - 50.0).abs() < 1e-6);
        assert!((ft.normalize() + v.normalize()).norm() < 1e-12);
        assert_eq!(s.feet[0].regime, FrictionRegime::Slip);
    }

    #[test]
    fn normal_force_never_pulls() {
        let s = contact_forces(&[Vector3::new(0.0, 0.0, -0.001)], &[Vector3::new(0.0, 0.0, 5.0)], &flat(), &ContactParams::default());
        assert_eq!(s.feet[0].normal_force, 0.0);
        assert_eq!(s.feet[0].force, Vector3::zeros());
    }

    #[test]
    fn impact_edge_trigger() {
        let none = ContactState::none(4);
        let mut touching = ContactState::none(4);
        touching.feet[2].in_contact = true;
        let vel = vec![Vector3::zeros(), Vector3::zeros(), Vector3::new(0.0, 0.0, -0.3), Vector3::zeros()];
        let ev = detect_impacts(&none, &touching, &vel);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].foot, 2);
        assert!((ev[0].speed() - 0.3).abs() < 1e-12);
        assert!(detect_impacts(&touching, &touching, &vel).is_empty());
        assert!(detect_impacts(&none, &none, &vel).is_empty());
    }

    #[test]
    fn rejects_inverted_friction() {
        let p = ContactParams {
            mu_static: 0.3,
            mu_dynamic: 0.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(ContactParams::default().validate().is_ok());
    }
}
