//! Per-episode domain randomization and push disturbances.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationConfig {
    pub mass: bool,
    pub friction: bool,
    pub pushes: bool,
    pub constant_force: bool,
    /// ± kg added to the base.
    pub added_mass: f64,
    pub mu_static: [f64; 2],
    pub mu_dynamic: [f64; 2],
    /// Largest horizontal velocity impulse, m/s.
    pub push_velocity: f64,
    /// Seconds between impulses, drawn uniformly.
    pub push_interval: [f64; 2],
    /// Largest constant base force, N.
    pub max_force: f64,
    /// Uniform noise on the initial joint angles, rad.
    pub initial_joint_noise: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            mass: true,
            friction: true,
            pushes: true,
            constant_force: true,
            added_mass: 2.0,
            mu_static: [0.4, 1.4],
            mu_dynamic: [0.1, 1.4],
            push_velocity: 0.7,
            push_interval: [4.0, 8.0],
            max_force: 5.0,
            initial_joint_noise: 0.1,
        }
    }
}

impl RandomizationConfig {
    pub fn disabled() -> Self {
        RandomizationConfig {
            mass: false,
            friction: false,
            pushes: false,
            constant_force: false,
            initial_joint_noise: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(ordered(self.mu_static) && ordered(self.mu_dynamic) && ordered(self.push_interval)) {
            return Err(Error::Config("randomization ranges must be ordered intervals".into()));
        }
        if self.mu_static[0] < 0.0 || self.mu_dynamic[0] < 0.0 || self.push_interval[0] <= 0.0 {
            return Err(Error::Config("friction ranges must be non-negative and push intervals positive".into()));
        }
        for (name, v) in [
            ("added_mass", self.added_mass),
            ("push_velocity", self.push_velocity),
            ("max_force", self.max_force),
            ("initial_joint_noise", self.initial_joint_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("randomization {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationDraw {
    pub added_mass: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    /// Constant world-frame force on the base, N.
    pub force: [f64; 3],
    /// Seconds until the first velocity impulse, if pushes are on.
    pub first_push: Option<f64>,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Uniform direction scaled by a magnitude uniform in [0, max].
fn random_vector<R: Rng>(rng: &mut R, max: f64, planar: bool) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            if planar { 0.0 } else { rng.gen_range(-1.0..=1.0) },
        );
        let n = v.norm();
        if n > 1e-6 && n <= 1.0 {
            return v / n * rng.gen_range(0.0..=max);
        }
    }
}

impl RandomizationDraw {
    pub fn nominal(mu_static: f64, mu_dynamic: f64) -> Self {
        RandomizationDraw {
            added_mass: 0.0,
            mu_static,
            mu_dynamic,
            force: [0.0; 3],
            first_push: None,
        }
    }

    /// Draws one episode's perturbations. Friction is shared by all feet of
    /// the instance and the dynamic coefficient never exceeds the static one.
    pub fn sample<R: Rng>(cfg: &RandomizationConfig, nominal_mu: (f64, f64), rng: &mut R) -> Self {
        let mut d = RandomizationDraw::nominal(nominal_mu.0, nominal_mu.1);
        if cfg.mass {
            d.added_mass = rng.gen_range(-cfg.added_mass..=cfg.added_mass);
        }
        if cfg.friction {
            d.mu_static = uniform(rng, cfg.mu_static);
            d.mu_dynamic = uniform(rng, cfg.mu_dynamic).min(d.mu_static);
        }
        if cfg.constant_force && cfg.max_force > 0.0 {
            d.force = random_vector(rng, cfg.max_force, false).into();
        }
        if cfg.pushes {
            d.first_push = Some(uniform(rng, cfg.push_interval));
        }
        d
    }
}

pub fn next_push_interval<R: Rng>(cfg: &RandomizationConfig, rng: &mut R) -> f64 {
    uniform(rng, cfg.push_interval)
}

pub fn push_impulse<R: Rng>(cfg: &RandomizationConfig, rng: &mut R) -> Vector3<f64> {
    random_vector(rng, cfg.push_velocity, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_within_ranges() {
        let cfg = RandomizationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let d = RandomizationDraw::sample(&cfg, (1.0, 0.8), &mut rng);
            assert!(d.added_mass.abs() <= 2.0);
            assert!((0.4..=1.4).contains(&d.mu_static));
            assert!((0.1..=1.4).contains(&d.mu_dynamic));
            assert!(d.mu_dynamic <= d.mu_static);
            assert!(Vector3::from(d.force).norm() <= 5.0 + 1e-12);
            let t = d.first_push.unwrap();
            assert!((4.0..=8.0).contains(&t));
            let p = push_impulse(&cfg, &mut rng);
            assert!(p.norm() <= 0.7 + 1e-12 && p.z == 0.0);
        }
    }

    #[test]
    fn disabled_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = RandomizationDraw::sample(&RandomizationConfig::disabled(), (1.0, 0.8), &mut rng);
        assert_eq!(d, RandomizationDraw::nominal(1.0, 0.8));
    }
}
