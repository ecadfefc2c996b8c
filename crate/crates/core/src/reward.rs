//! Reward terms, gravity-dependent weight scaling and the power-penalty
//! curriculum.
//!
//! Every term carries its Earth weight `w_E` and a gravity exponent `k`;
//! scaling to gravity `g` sets `w = (g_E / g)^k · w_E`. Terms whose value is
//! independent of the torque magnitude use `k = 0`, torque-linear terms `k = 1`
//! and torque-quadratic terms `k = 2`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::actuation::{power_loss, ActuatorParams};
use crate::dynamics::EARTH_GRAVITY;
use crate::error::{Error, Result};
use crate::terrain::ImpactEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularization {
    Baseline,
    PowerOptimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Locomotion,
    BasePose,
}

impl std::fmt::Display for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regularization::Baseline => "baseline",
            Regularization::PowerOptimized => "power-optimized",
        })
    }
}

impl std::str::FromStr for Regularization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Regularization::Baseline),
            "power-optimized" | "power" => Ok(Regularization::PowerOptimized),
            other => Err(Error::Config(format!("unknown regularization '{other}'"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Locomotion => "locomotion",
            TaskKind::BasePose => "base-pose",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "locomotion" | "loco" => Ok(TaskKind::Locomotion),
            "base-pose" | "base_pose" | "pose" => Ok(TaskKind::BasePose),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// A task command. Yaw rates are in rad/s, heights in m, pitch in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum Command {
    Locomotion { vx: f64, vy: f64, yaw_rate: f64 },
    BasePose { height: f64, pitch: f64, yaw_rate: f64 },
}

impl Command {
    pub fn task(&self) -> TaskKind {
        match self {
            Command::Locomotion { .. } => TaskKind::Locomotion,
            Command::BasePose { .. } => TaskKind::BasePose,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        match *self {
            Command::Locomotion { vx, vy, yaw_rate } => [vx, vy, yaw_rate],
            Command::BasePose { height, pitch, yaw_rate } => [height, pitch, yaw_rate],
        }
    }

    pub fn from_array(task: TaskKind, v: [f64; 3]) -> Self {
        match task {
            TaskKind::Locomotion => Command::Locomotion {
                vx: v[0],
                vy: v[1],
                yaw_rate: v[2],
            },
            TaskKind::BasePose => Command::BasePose {
                height: v[0],
                pitch: v[1],
                yaw_rate: v[2],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Σ τ²
    Torque,
    /// Σ (a − a_prev)²
    ActionRate,
    /// Σ q̈²
    JointAcceleration,
    /// Mechanical joint power part of the energy penalty.
    EnergyJoint,
    /// Copper loss part of the energy penalty.
    EnergyWinding,
    /// exp(−(e_vx² + e_vy²) / 0.25)
    LinearTracking,
    /// exp(−e_ψ̇² / 0.25)
    YawTracking,
    /// Σ |v_F|² over touchdown events.
    FootImpact,
    /// exp(−e_h² / 0.1²)
    HeightTracking,
    /// exp(−e_θ² / 0.15²)
    PitchTracking,
    /// exp(−e_ψ̇² / 0.15²)
    YawRateTracking,
    /// v_x² + v_y²
    XyVelocity,
}

impl TermKind {
    pub fn is_tracking(self) -> bool {
        matches!(
            self,
            TermKind::LinearTracking
                | TermKind::YawTracking
                | TermKind::HeightTracking
                | TermKind::PitchTracking
                | TermKind::YawRateTracking
        )
    }

    pub fn is_energy(self) -> bool {
        matches!(self, TermKind::EnergyJoint | TermKind::EnergyWinding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTerm {
    pub name: String,
    pub kind: TermKind,
    /// Weight at Earth gravity.
    pub earth_weight: f64,
    /// Exponent of the gravity factor.
    pub exponent: u8,
    /// Weight in effect (after gravity scaling, before the curriculum).
    pub weight: f64,
    /// Ramped in by the power curriculum.
    #[serde(default)]
    pub curriculum: bool,
}

impl RewardTerm {
    pub fn new(name: &str, kind: TermKind, earth_weight: f64, exponent: u8) -> Self {
        RewardTerm {
            name: name.to_string(),
            kind,
            earth_weight,
            exponent,
            weight: earth_weight,
            curriculum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub regularization: Regularization,
    pub task: TaskKind,
    pub gravity_scaling: bool,
    /// Gravity the weights are currently scaled for.
    pub gravity: f64,
    /// Power-curriculum progress in [0, 1]; multiplies curriculum terms.
    pub curriculum_progress: f64,
    pub terms: Vec<RewardTerm>,
}

impl RewardSpec {
    /// Earth-gravity reward set for the given regularization and task.
    pub fn new(regularization: Regularization, task: TaskKind, gravity_scaling: bool) -> Self {
        let mut terms = match regularization {
            Regularization::Baseline => vec![
                RewardTerm::new("torque", TermKind::Torque, -1e-4, 2),
                RewardTerm::new("action_rate", TermKind::ActionRate, -0.08, 0),
                RewardTerm::new("joint_acceleration", TermKind::JointAcceleration, -8e-7, 0),
            ],
            Regularization::PowerOptimized => vec![
                RewardTerm {
                    curriculum: true,
                    ..RewardTerm::new("energy_joint", TermKind::EnergyJoint, -3e-3, 1)
                },
                RewardTerm {
                    curriculum: true,
                    ..RewardTerm::new("energy_winding", TermKind::EnergyWinding, -3e-3, 2)
                },
            ],
        };
        match task {
            TaskKind::Locomotion => terms.extend([
                RewardTerm::new("linear_tracking", TermKind::LinearTracking, 1.0, 0),
                RewardTerm::new("yaw_tracking", TermKind::YawTracking, 0.5, 0),
                RewardTerm::new("foot_impact", TermKind::FootImpact, -0.6, 0),
            ]),
            TaskKind::BasePose => terms.extend([
                RewardTerm::new("height_tracking", TermKind::HeightTracking, 1.0, 0),
                RewardTerm::new("pitch_tracking", TermKind::PitchTracking, 1.0, 0),
                RewardTerm::new("yaw_rate_tracking", TermKind::YawRateTracking, 2.0, 0),
                RewardTerm::new("xy_velocity", TermKind::XyVelocity, -0.6, 0),
            ]),
        }
        RewardSpec {
            regularization,
            task,
            gravity_scaling,
            gravity: EARTH_GRAVITY,
            curriculum_progress: 1.0,
            terms,
        }
    }

    pub fn term(&self, name: &str) -> Option<&RewardTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Weight actually applied by [`eval_reward`], curriculum included.
    pub fn effective_weight(&self, term: &RewardTerm) -> f64 {
        if term.curriculum {
            curriculum_weight(term.weight, self.curriculum_progress)
        } else {
            term.weight
        }
    }
}

pub fn gravity_factor(g: f64) -> Result<f64> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::Config(format!("gravity must be positive, got {g}")));
    }
    Ok(EARTH_GRAVITY / g)
}

/// Rescale every weight from its Earth value to gravity `g`. With scaling
/// disabled the Earth weights are kept.
pub fn scale_weights(spec: &RewardSpec, g: f64) -> Result<RewardSpec> {
    let alpha = gravity_factor(g)?;
    let mut out = spec.clone();
    out.gravity = g;
    for term in &mut out.terms {
        term.weight = if spec.gravity_scaling {
            alpha.powi(term.exponent as i32) * term.earth_weight
        } else {
            term.earth_weight
        };
    }
    Ok(out)
}

/// Linear ramp from 0 to `w_final`; `progress` is clamped to [0, 1].
pub fn curriculum_weight(w_final: f64, progress: f64) -> f64 {
    w_final * progress.clamp(0.0, 1.0)
}

/// Quantities measured over one control step. Fields a spec does not use may
/// be left empty.
#[derive(Debug, Clone, Default)]
pub struct StepContext {
    pub command: Option<Command>,
    /// Base linear velocity in the base frame.
    pub base_linear_velocity: Option<Vector3<f64>>,
    /// Base angular velocity in the base frame.
    pub base_angular_velocity: Option<Vector3<f64>>,
    /// Base height above the terrain.
    pub base_height: Option<f64>,
    /// Base pitch relative to the terrain.
    pub base_pitch: Option<f64>,
    pub joint_torques: Option<Vec<f64>>,
    pub joint_velocities: Option<Vec<f64>>,
    pub joint_accelerations: Option<Vec<f64>>,
    pub previous_action: Option<Vec<f64>>,
    pub action: Option<Vec<f64>>,
    pub impacts: Option<Vec<ImpactEvent>>,
    pub gravity: Option<f64>,
    pub actuator: Option<ActuatorParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub name: String,
    /// Unweighted term value.
    pub raw: f64,
    /// Contribution to the total.
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub total: f64,
    pub terms: Vec<TermValue>,
    /// Mean of the unweighted tracking terms, in (0, 1].
    pub tracking: f64,
}

impl RewardBreakdown {
    pub fn get(&self, name: &str) -> Option<&TermValue> {
        self.terms.iter().find(|t| t.name == name)
    }
}

fn need<'a, T>(v: &'a Option<T>, name: &'static str) -> Result<&'a T> {
    v.as_ref().ok_or(Error::MissingContext(name))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn command_of(ctx: &StepContext, task: TaskKind) -> Result<[f64; 3]> {
    let c = need(&ctx.command, "command")?;
    if c.task() != task {
        return Err(Error::Config(format!("{} command given to a {task} reward", c.task())));
    }
    Ok(c.to_array())
}

fn raw_value(kind: TermKind, ctx: &StepContext, task: TaskKind) -> Result<f64> {
    let gauss = |e: f64, s2: f64| (-(e * e) / s2).exp();
    Ok(match kind {
        TermKind::Torque => sum_sq(need(&ctx.joint_torques, "joint_torques")?),
        TermKind::ActionRate => {
            let a = need(&ctx.action, "action")?;
            let p = need(&ctx.previous_action, "previous_action")?;
            if a.len() != p.len() {
                return Err(Error::Dimension {
                    what: "previous action",
                    expected: a.len(),
                    actual: p.len(),
                });
            }
            a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum()
        }
        TermKind::JointAcceleration => sum_sq(need(&ctx.joint_accelerations, "joint_accelerations")?),
        TermKind::EnergyJoint | TermKind::EnergyWinding => {
            let tau = need(&ctx.joint_torques, "joint_torques")?;
            let qd = need(&ctx.joint_velocities, "joint_velocities")?;
            let params = need(&ctx.actuator, "actuator")?;
            let p = power_loss(tau, qd, params)?;
            if kind == TermKind::EnergyJoint {
                p.joint_total
            } else {
                p.winding_total
            }
        }
        TermKind::LinearTracking => {
            let c = command_of(ctx, task)?;
            let v = need(&ctx.base_linear_velocity, "base_linear_velocity")?;
            let (ex, ey) = (c[0] - v.x, c[1] - v.y);
            (-(ex * ex + ey * ey) / 0.25).exp()
        }
        TermKind::YawTracking => {
            let c = command_of(ctx, task)?;
            let w = need(&ctx.base_angular_velocity, "base_angular_velocity")?;
            gauss(c[2] - w.z, 0.25)
        }
        TermKind::FootImpact => need(&ctx.impacts, "impacts")?
            .iter()
            .map(|e| e.velocity.norm_squared())
            .sum(),
        TermKind::HeightTracking => {
            let c = command_of(ctx, task)?;
            gauss(c[0] - need(&ctx.base_height, "base_height")?, 0.1 * 0.1)
        }
        TermKind::PitchTracking => {
            let c = command_of(ctx, task)?;
            gauss(c[1] - need(&ctx.base_pitch, "base_pitch")?, 0.15 * 0.15)
        }
        TermKind::YawRateTracking => {
            let c = command_of(ctx, task)?;
            let w = need(&ctx.base_angular_velocity, "base_angular_velocity")?;
            gauss(c[2] - w.z, 0.15 * 0.15)
        }
        TermKind::XyVelocity => {
            let v = need(&ctx.base_linear_velocity, "base_linear_velocity")?;
            v.x * v.x + v.y * v.y
        }
    })
}

/// Weighted sum of all terms in `spec` plus the per-term breakdown.
pub fn eval_reward(spec: &RewardSpec, ctx: &StepContext) -> Result<RewardBreakdown> {
    if let Some(g) = ctx.gravity {
        if spec.gravity_scaling && (g - spec.gravity).abs() > 1e-9 * g.abs().max(1.0) {
            return Err(Error::Config(format!(
                "reward weights are scaled for g = {} but the step reports g = {g}",
                spec.gravity
            )));
        }
    }
    let mut out = RewardBreakdown::default();
    let (mut track_sum, mut track_n) = (0.0, 0usize);
    for term in &spec.terms {
        let raw = raw_value(term.kind, ctx, spec.task)?;
        if !raw.is_finite() {
            return Err(Error::NonFinite("reward term"));
        }
        let weighted = spec.effective_weight(term) * raw;
        if term.kind.is_tracking() {
            track_sum += raw;
            track_n += 1;
        }
        out.total += weighted;
        out.terms.push(TermValue {
            name: term.name.clone(),
            raw,
            weighted,
        });
    }
    out.tracking = if track_n > 0 { track_sum / track_n as f64 } else { 0.0 };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    Linear,
    /// Jump straight to the final weight once engaged.
    Step,
}

/// Ramps the power penalty in once the policy tracks its commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurriculum {
    /// Mean tracking reward that engages the ramp.
    pub threshold: f64,
    /// Iterations from engagement to full weight.
    pub ramp_iterations: usize,
    pub shape: RampShape,
    pub engaged_at: Option<usize>,
}

impl Default for PowerCurriculum {
    fn default() -> Self {
        PowerCurriculum {
            threshold: 0.5,
            ramp_iterations: 200,
            shape: RampShape::Linear,
            engaged_at: None,
        }
    }
}

impl PowerCurriculum {
    /// Record the latest mean tracking reward and return the progress to use.
    pub fn update(&mut self, iteration: usize, mean_tracking: f64) -> f64 {
        if self.engaged_at.is_none() && mean_tracking > self.threshold {
            self.engaged_at = Some(iteration);
        }
        self.progress(iteration)
    }

    pub fn progress(&self, iteration: usize) -> f64 {
        match self.engaged_at {
            None => 0.0,
            Some(start) => match self.shape {
                RampShape::Step => 1.0,
                RampShape::Linear => {
                    if self.ramp_iterations == 0 {
                        1.0
                    } else {
                        ((iteration.saturating_sub(start)) as f64 / self.ramp_iterations as f64).min(1.0)
                    }
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn loco_ctx(cmd: [f64; 3], v: [f64; 3], wz: f64) -> StepContext {
        StepContext {
            command: Some(Command::from_array(TaskKind::Locomotion, cmd)),
            base_linear_velocity: Some(Vector3::from(v)),
            base_angular_velocity: Some(Vector3::new(0.0, 0.0, wz)),
            joint_torques: Some(vec![0.0; 12]),
            joint_velocities: Some(vec![0.0; 12]),
            joint_accelerations: Some(vec![0.0; 12]),
            previous_action: Some(vec![0.0; 12]),
            action: Some(vec![0.0; 12]),
            impacts: Some(vec![]),
            actuator: Some(ActuatorParams::default()),
            ..Default::default()
        }
    }

    #[test]
    fn gravity_factor_examples() {
        assert_eq!(gravity_factor(9.81).unwrap(), 1.0);
        assert_relative_eq!(gravity_factor(1.62).unwrap(), 6.0556, epsilon = 1e-4);
        assert_eq!(gravity_factor(19.62).unwrap(), 0.5);
        assert!(gravity_factor(0.0).is_err());
        assert!(gravity_factor(-3.0).is_err());
    }

    #[test]
    fn scaled_weight_examples() {
        let base = RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, true);
        let moon = scale_weights(&base, 1.62).unwrap();
        assert!((moon.term("torque").unwrap().weight - (-3.667e-3)).abs() < 5e-7);
        let power = RewardSpec::new(Regularization::PowerOptimized, TaskKind::Locomotion, true);
        let mars = scale_weights(&power, 3.73).unwrap();
        assert!((mars.term("energy_joint").unwrap().weight - (-7.890e-3)).abs() < 5e-7);
        let earth = scale_weights(&power, 9.81).unwrap();
        assert_eq!(earth.terms, power.terms);
        let off = RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, false);
        assert_eq!(scale_weights(&off, 1.62).unwrap().terms, off.terms);
    }

    #[test]
    fn reward_examples() {
        let spec = RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, true);
        let r = eval_reward(&spec, &loco_ctx([0.4, 0.1, 0.3], [0.4, 0.1, 0.0], 0.3)).unwrap();
        assert_relative_eq!(r.total, 1.5, epsilon = 1e-12);
        let r = eval_reward(&spec, &loco_ctx([0.5, 0.0, 0.0], [0.0; 3], 0.0)).unwrap();
        assert_relative_eq!(r.get("linear_tracking").unwrap().raw, (-1.0f64).exp(), epsilon = 1e-12);

        let pose = RewardSpec::new(Regularization::Baseline, TaskKind::BasePose, true);
        let ctx = StepContext {
            command: Some(Command::BasePose {
                height: 0.3,
                pitch: 0.0,
                yaw_rate: 0.0,
            }),
            base_height: Some(0.2),
            base_pitch: Some(0.0),
            ..loco_ctx([0.0; 3], [0.0; 3], 0.0)
        };
        let r = eval_reward(&pose, &ctx).unwrap();
        assert_relative_eq!(r.get("height_tracking").unwrap().raw, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn missing_field_is_reported() {
        let spec = RewardSpec::new(Regularization::PowerOptimized, TaskKind::Locomotion, true);
        let mut ctx = loco_ctx([0.0; 3], [0.0; 3], 0.0);
        ctx.actuator = None;
        let err = eval_reward(&spec, &ctx).unwrap_err();
        assert!(matches!(err, Error::MissingContext("actuator")));
    }

    #[test]
    fn gravity_mismatch_rejected() {
        let spec = scale_weights(&RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, true), 1.62).unwrap();
        let mut ctx = loco_ctx([0.0; 3], [0.0; 3], 0.0);
        ctx.gravity = Some(9.81);
        assert!(eval_reward(&spec, &ctx).is_err());
        ctx.gravity = Some(1.62);
        assert!(eval_reward(&spec, &ctx).is_ok());
    }

    #[test]
    fn curriculum_ramp() {
        assert_eq!(curriculum_weight(-3e-3, 0.0), 0.0);
        assert_eq!(curriculum_weight(-3e-3, 1.0), -3e-3);
        assert_eq!(curriculum_weight(-3e-3, 0.5), -1.5e-3);
        let mut c = PowerCurriculum {
            ramp_iterations: 10,
            ..Default::default()
        };
        assert_eq!(c.update(0, 0.3), 0.0);
        assert_eq!(c.update(4, 0.6), 0.0);
        assert_eq!(c.update(9, 0.2), 0.5);
        assert_eq!(c.update(30, 0.2), 1.0);
    }

    #[test]
    fn foot_impact_only_counts_events() {
        let spec = RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, true);
        let mut ctx = loco_ctx([0.0; 3], [0.0; 3], 0.0);
        ctx.impacts = Some(vec![ImpactEvent {
            foot: 2,
            velocity: Vector3::new(0.0, 0.3, -0.4),
        }]);
        let r = eval_reward(&spec, &ctx).unwrap();
        assert_relative_eq!(r.get("foot_impact").unwrap().weighted, -0.6 * 0.25, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn weight_ratio_law(g in 0.1f64..40.0, power in any::<bool>(), pose in any::<bool>()) {
            let reg = if power { Regularization::PowerOptimized } else { Regularization::Baseline };
            let task = if pose { TaskKind::BasePose } else { TaskKind::Locomotion };
            let spec = RewardSpec::new(reg, task, true);
            let scaled = scale_weights(&spec, g).unwrap();
            let alpha = 9.81 / g;
            for t in &scaled.terms {
                let ratio = t.weight / t.earth_weight;
                let expected = alpha.powi(t.exponent as i32);
                prop_assert!((ratio - expected).abs() <= 1e-12 * expected);
            }
        }

        #[test]
        fn tracking_bounded(c in prop::array::uniform3(-2.0f64..2.0), v in prop::array::uniform3(-2.0f64..2.0), wz in -2.0f64..2.0) {
            let spec = RewardSpec::new(Regularization::Baseline, TaskKind::Locomotion, true);
            let r = eval_reward(&spec, &loco_ctx(c, v, wz)).unwrap();
            for name in ["linear_tracking", "yaw_tracking"] {
                let x = r.get(name).unwrap().raw;
                prop_assert!(x > 0.0 && x <= 1.0);
            }
            let perfect = eval_reward(&spec, &loco_ctx(c, [c[0], c[1], 0.0], c[2])).unwrap();
            prop_assert!(perfect.total >= r.total);
        }

        #[test]
        fn energy_recombines(g in 0.5f64..30.0, tau in prop::collection::vec(-30.0f64..30.0, 12), qd in prop::collection::vec(-12.0f64..12.0, 12)) {
            let spec = scale_weights(&RewardSpec::new(Regularization::PowerOptimized, TaskKind::Locomotion, true), g).unwrap();
            let mut ctx = loco_ctx([0.0; 3], [0.0; 3], 0.0);
            ctx.joint_torques = Some(tau.clone());
            ctx.joint_velocities = Some(qd.clone());
            let r = eval_reward(&spec, &ctx).unwrap();
            let p = power_loss(&tau, &qd, &ActuatorParams::default()).unwrap();
            let alpha = 9.81 / g;
            let expected = alpha * -3e-3 * p.joint_total + alpha * alpha * -3e-3 * p.winding_total;
            let got = r.get("energy_joint").unwrap().weighted + r.get("energy_winding").unwrap().weighted;
            prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }
}
