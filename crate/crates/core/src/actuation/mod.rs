//! Joint PD actuation and the drivetrain power-loss model.
//!
//! Billed electrical power per joint is the recuperation loss on mechanical
//! power plus resistive winding loss:
//!
//! ```text
//! P_joint   = max(τ·q̇, 0) − min(η·τ·q̇, 0)
//! P_winding = (τ / (G·k_t))² · R
//! ```
//!
//! Gearbox losses are not modeled separately; the joint damping in the
//! dynamics model stands in for them.

mod log;

pub use log::{LogSample, TrajectoryLog, TRAJECTORY_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorParams {
    pub gear_ratio: f64,
    /// Motor-side torque constant, N·m/A.
    pub torque_constant: f64,
    /// Ω
    pub winding_resistance: f64,
    /// Fraction of braking power returned to the supply, in [0, 1].
    pub recuperation_efficiency: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub velocity_limit: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams {
            gear_ratio: 9.0,
            torque_constant: 0.1,
            winding_resistance: 0.3,
            recuperation_efficiency: 0.0,
            kp: 40.0,
            kd: 1.2,
            torque_limit: 30.0,
            velocity_limit: 12.0,
        }
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gear_ratio", self.gear_ratio),
            ("torque_constant", self.torque_constant),
            ("winding_resistance", self.winding_resistance),
            ("torque_limit", self.torque_limit),
            ("velocity_limit", self.velocity_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("actuator {name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.recuperation_efficiency) {
            return Err(Error::Config(format!(
                "recuperation efficiency must lie in [0, 1], got {}",
                self.recuperation_efficiency
            )));
        }
        if self.kp < 0.0 || self.kd < 0.0 {
            return Err(Error::Config("PD gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// `clamp(k_p (q* − q) − k_d q̇ + τ_ff, ±τ_max)`
pub fn pd_torque(params: &ActuatorParams, q_target: f64, q: f64, q_dot: f64, tau_ff: f64) -> f64 {
    let raw = params.kp * (q_target - q) - params.kd * q_dot + tau_ff;
    raw.clamp(-params.torque_limit, params.torque_limit)
}

/// Removes drive torque that would push a joint further past its speed limit.
pub fn limit_for_speed(params: &ActuatorParams, tau: f64, q_dot: f64) -> f64 {
    if q_dot.abs() > params.velocity_limit && tau * q_dot > 0.0 {
        0.0
    } else {
        tau
    }
}

pub fn recuperation_loss(tau: f64, q_dot: f64, eta: f64) -> f64 {
    let p = tau * q_dot;
    p.max(0.0) - (eta * p).min(0.0)
}

pub fn winding_loss(tau: f64, params: &ActuatorParams) -> f64 {
    let current = tau / (params.gear_ratio * params.torque_constant);
    current * current * params.winding_resistance
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// W
    pub total: f64,
    pub joint_total: f64,
    pub winding_total: f64,
    pub joint: Vec<f64>,
    pub winding: Vec<f64>,
}

pub fn power_loss(tau: &[f64], q_dot: &[f64], params: &ActuatorParams) -> Result<PowerBreakdown> {
    if tau.len() != q_dot.len() {
        return Err(Error::Dimension {
            what: "joint velocities",
            expected: tau.len(),
            actual: q_dot.len(),
        });
    }
    let joint: Vec<f64> = tau
        .iter()
        .zip(q_dot)
        .map(|(&t, &w)| recuperation_loss(t, w, params.recuperation_efficiency))
        .collect();
    let winding: Vec<f64> = tau.iter().map(|&t| winding_loss(t, params)).collect();
    let joint_total: f64 = joint.iter().sum();
    let winding_total: f64 = winding.iter().sum();
    Ok(PowerBreakdown {
        total: joint_total + winding_total,
        joint_total,
        winding_total,
        joint,
        winding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPower {
    pub duration_s: f64,
    pub average_power_w: f64,
    pub energy_j: f64,
    pub joint_energy_j: f64,
    pub winding_energy_j: f64,
    pub joint_average_w: f64,
    pub winding_average_w: f64,
}

/// Trapezoid-rule integral of [`power_loss`] over a uniformly sampled log.
pub fn trajectory_power(log: &TrajectoryLog, params: &ActuatorParams) -> Result<TrajectoryPower> {
    log.check_uniform()?;
    let powers = log
        .samples
        .iter()
        .map(|s| power_loss(&s.tau, &s.dq, params))
        .collect::<Result<Vec<_>>>()?;
    let mut joint = 0.0;
    let mut winding = 0.0;
    for (pair, times) in powers.windows(2).zip(log.samples.windows(2)) {
        let dt = times[1].t - times[0].t;
        joint += 0.5 * dt * (pair[0].joint_total + pair[1].joint_total);
        winding += 0.5 * dt * (pair[0].winding_total + pair[1].winding_total);
    }
    let duration = log.duration();
    Ok(TrajectoryPower {
        duration_s: duration,
        average_power_w: (joint + winding) / duration,
        energy_j: joint + winding,
        joint_energy_j: joint,
        winding_energy_j: winding,
        joint_average_w: joint / duration,
        winding_average_w: winding / duration,
    })
}
