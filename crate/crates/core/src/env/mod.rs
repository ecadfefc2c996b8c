//! Locomotion and base-pose environments.
//!
//! The policy acts at 50 Hz by setting joint position targets
//! `q* = 0.3·a + q_def`; each control step runs four 5 ms physics substeps of
//! PD control, penalty contact and rigid-body dynamics. Leg gravity
//! compensation torques are always fed forward to the joints.
//!
//! Dissipative forces (joint damping, the PD derivative term and the contact
//! damper and stick friction) are integrated linearly-implicitly by solving
//! `(M + dt·C)·a = rhs`, where `C` is their velocity derivative.

mod command;
mod curriculum;
mod observation;
mod randomization;
mod symmetry;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use command::{sample_command, CommandRanges, EvalProtocol, ProtocolPhase, EVAL_DURATION_S};
pub use curriculum::{terrain_curriculum_update, TerrainConfig};
pub use observation::{
    assemble_actor_obs, assemble_critic_obs, base_twist_body, projected_gravity, AngularHistory, ACTION_DIM,
    ACTOR_OBS_DIM, CRITIC_OBS_DIM, HISTORY_LEN,
};
pub use randomization::{RandomizationConfig, RandomizationDraw};
pub use symmetry::{symmetry_transforms, SignedPermutation, SymmetryLabel, SymmetryTransform};

use crate::actuation::{limit_for_speed, pd_torque, ActuatorParams, LogSample, TrajectoryLog};
use crate::dynamics::{
    add_point_force, bias_forces_kin, gravity_forces_kin, integrate, leg_gravity_compensation_kin, mass_matrix_kin,
    solve_acceleration, BaseMode, GeneralizedState, GravityEnv, Kinematics, RobotConfig, RobotModel, EARTH_GRAVITY,
};
use crate::error::{Error, Result};
use crate::reward::{eval_reward, scale_weights, Command, RewardBreakdown, RewardSpec, Regularization, StepContext, TaskKind};
use crate::rig::{RigRuntime, RigSpec};
use crate::terrain::{
    contact_forces, detect_impacts, generate_terrain, ContactParams, ContactState, HeightField, ImpactEvent,
    TerrainKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub task: TaskKind,
    /// Gravity the policy is trained for, m/s².
    pub gravity: f64,
    pub regularization: Regularization,
    pub gravity_scaling: bool,
    pub control_dt: f64,
    pub substeps: usize,
    pub episode_length_s: f64,
    pub command_resample_s: f64,
    pub action_scale: f64,
    /// Roll or pitch beyond this terminates the episode, rad.
    pub max_tilt: f64,
    /// Terminate when the base or a hip touches the terrain.
    pub body_contact_termination: bool,
    /// Feed the leg gravity-compensation torques forward.
    pub feedforward: bool,
    /// Constant mass added to the base, e.g. from a rig compensation plan, kg.
    pub base_mass_offset: f64,
    pub actuator: ActuatorParams,
    pub contact: ContactParams,
    pub commands: CommandRanges,
    pub randomization: RandomizationConfig,
    pub terrain: TerrainConfig,
    /// Run on the offload rig: Earth gravity plus the rope force.
    pub rig: Option<RigSpec>,
    /// Custom robot; the reference quadruped when absent.
    pub robot: Option<RobotConfig>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            task: TaskKind::Locomotion,
            gravity: EARTH_GRAVITY,
            regularization: Regularization::Baseline,
            gravity_scaling: true,
            control_dt: 0.02,
            substeps: 4,
            episode_length_s: 20.0,
            command_resample_s: 5.0,
            action_scale: 0.3,
            max_tilt: 1.2,
            body_contact_termination: true,
            feedforward: true,
            base_mass_offset: 0.0,
            actuator: ActuatorParams::default(),
            contact: ContactParams::default(),
            commands: CommandRanges::default(),
            randomization: RandomizationConfig::default(),
            terrain: TerrainConfig::default(),
            rig: None,
            robot: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        GravityEnv::new(self.gravity)?;
        if !(self.control_dt > 0.0 && self.substeps >= 1 && self.episode_length_s > 0.0) {
            return Err(Error::Config("control_dt, substeps and episode length must be positive".into()));
        }
        if !(self.command_resample_s > 0.0 && self.action_scale > 0.0 && self.max_tilt > 0.0) {
            return Err(Error::Config(
                "command_resample_s, action_scale and max_tilt must be positive".into(),
            ));
        }
        if self.terrain.kinds.is_empty() || self.terrain.levels == 0 {
            return Err(Error::Config("terrain needs at least one kind and one level".into()));
        }
        if let Some(rig) = &self.rig {
            rig.validate()?;
        }
        self.actuator.validate()?;
        self.contact.validate()?;
        self.commands.validate()?;
        self.randomization.validate()?;
        Ok(())
    }

    pub fn physics_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    pub fn max_episode_steps(&self) -> usize {
        (self.episode_length_s / self.control_dt).round() as usize
    }

    /// Gravity acting in the simulation (Earth on the rig).
    pub fn physics_gravity(&self) -> f64 {
        if self.rig.is_some() {
            EARTH_GRAVITY
        } else {
            self.gravity
        }
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        let model = match &self.robot {
            Some(cfg) => RobotModel::from_config(cfg)?,
            None => RobotModel::reference(),
        };
        model.validate_quadruped()?;
        Ok(model)
    }

    /// Flat ground, no randomization.
    pub fn flat(task: TaskKind, gravity: f64) -> Self {
        EnvConfig {
            task,
            gravity,
            terrain: TerrainConfig::flat(),
            randomization: RandomizationConfig::disabled(),
            ..Default::default()
        }
    }
}

/// Wraps an environment configuration for deployment on the offload rig.
pub fn rig_environment(base: &EnvConfig, rig: RigSpec) -> EnvConfig {
    EnvConfig {
        rig: Some(rig),
        feedforward: true,
        ..base.clone()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub steps: usize,
    pub total_reward: f64,
    /// Sums of weighted reward terms.
    pub term_sums: BTreeMap<String, f64>,
    /// Sums of unweighted reward terms.
    pub raw_sums: BTreeMap<String, f64>,
    /// Progress along the commanded horizontal direction, m.
    pub traversed: f64,
    /// Commanded horizontal distance, m.
    pub commanded: f64,
    pub terminated: bool,
    pub timeout: bool,
    pub fault: bool,
    pub level: usize,
    pub terrain: Option<TerrainKind>,
}

impl EpisodeStats {
    pub fn mean_term(&self, name: &str) -> Option<f64> {
        (self.steps > 0).then(|| self.raw_sums.get(name).copied().unwrap_or(0.0) / self.steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TerminationCause {
    Tilt,
    BaseContact,
    HipContact,
    Fault(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    /// Episode over; the caller should [`Env::reset`].
    pub done: bool,
    pub terminated: bool,
    pub timeout: bool,
    pub fault: bool,
    pub cause: Option<TerminationCause>,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// Command the step was rewarded against.
    pub command: [f64; 3],
    /// `|c_v − v|` in the base plane (locomotion) or height error (base pose).
    pub tracking_error: f64,
    pub base_linear_velocity: [f64; 3],
    pub base_angular_velocity: [f64; 3],
    pub base_height: f64,
    pub base_pitch: f64,
    pub impacts: usize,
}

pub struct Env {
    cfg: EnvConfig,
    nominal: RobotModel,
    model: RobotModel,
    q_def: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    physics_gravity: GravityEnv,
    reward_spec: RewardSpec,
    rng: ChaCha8Rng,
    seed: u64,
    terrain: HeightField,
    terrain_kind: TerrainKind,
    level: usize,
    state: GeneralizedState,
    command: Command,
    fixed_command: bool,
    command_timer: f64,
    history: AngularHistory,
    action: Vec<f64>,
    q_target: Vec<f64>,
    prev_qd: Vec<f64>,
    last_tau: Vec<f64>,
    contact: ContactState,
    draw: RandomizationDraw,
    next_push: Option<f64>,
    time: f64,
    steps: usize,
    rig: Option<RigRuntime>,
    episode: EpisodeStats,
    finished: Option<EpisodeStats>,
    log: Option<TrajectoryLog>,
}

impl Env {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Env> {
        Env::with_slot(cfg, seed, 0)
    }

    /// `slot` picks the terrain kind so that a batch of environments mixes
    /// the configured kinds evenly.
    pub fn with_slot(cfg: EnvConfig, seed: u64, slot: usize) -> Result<Env> {
        cfg.validate()?;
        let nominal = cfg.robot_model()?;
        let model = nominal.with_added_base_mass(cfg.base_mass_offset)?;
        let q_def = nominal.default_joint_positions();
        let lower = nominal.joints().map(|j| j.lower).collect();
        let upper = nominal.joints().map(|j| j.upper).collect();
        let physics_gravity = GravityEnv::new(cfg.physics_gravity())?;
        let reward_spec = scale_weights(
            &RewardSpec::new(cfg.regularization, cfg.task, cfg.gravity_scaling),
            cfg.gravity,
        )?;
        let terrain_kind = cfg.terrain.kinds[slot % cfg.terrain.kinds.len()];
        let level = cfg.terrain.max_initial_level.min(cfg.terrain.levels - 1);
        let terrain = make_terrain(terrain_kind, &cfg.terrain, level, seed)?;
        let n = q_def.len();
        let state = GeneralizedState::new(&model);
        let command = Command::from_array(cfg.task, [0.0; 3]);
        let draw = RandomizationDraw::nominal(cfg.contact.mu_static, cfg.contact.mu_dynamic);
        let mut env = Env {
            contact: ContactState::none(nominal.feet.len()),
            cfg,
            nominal,
            model,
            q_target: q_def.clone(),
            q_def,
            lower,
            upper,
            physics_gravity,
            reward_spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            terrain,
            terrain_kind,
            level,
            state,
            command,
            fixed_command: false,
            command_timer: 0.0,
            history: AngularHistory::default(),
            action: vec![0.0; n],
            prev_qd: vec![0.0; n],
            last_tau: vec![0.0; n],
            draw,
            next_push: None,
            time: 0.0,
            steps: 0,
            rig: None,
            episode: EpisodeStats::default(),
            finished: None,
            log: None,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn state(&self) -> &GeneralizedState {
        &self.state
    }

    pub fn terrain(&self) -> &HeightField {
        &self.terrain
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn terrain_kind(&self) -> TerrainKind {
        self.terrain_kind
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn draw(&self) -> &RandomizationDraw {
        &self.draw
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.reward_spec
    }

    pub fn default_joint_positions(&self) -> &[f64] {
        &self.q_def
    }

    pub fn rig(&self) -> Option<&RigRuntime> {
        self.rig.as_ref()
    }

    pub fn contact(&self) -> &ContactState {
        &self.contact
    }

    /// Torques applied on the last physics substep.
    pub fn last_torques(&self) -> &[f64] {
        &self.last_tau
    }

    /// Statistics of the episode in progress.
    pub fn episode(&self) -> &EpisodeStats {
        &self.episode
    }

    /// Statistics of the most recently finished episode.
    pub fn finished_episode(&self) -> Option<&EpisodeStats> {
        self.finished.as_ref()
    }

    /// Power-curriculum progress applied to the energy terms.
    pub fn set_power_progress(&mut self, progress: f64) {
        self.reward_spec.curriculum_progress = progress.clamp(0.0, 1.0);
    }

    /// Pins the command; resampling stops until [`Env::release_command`].
    pub fn set_command(&mut self, command: Command) -> Result<()> {
        if command.task() != self.cfg.task {
            return Err(Error::Config(format!(
                "{} command given to a {} environment",
                command.task(),
                self.cfg.task
            )));
        }
        self.command = command;
        self.fixed_command = true;
        Ok(())
    }

    pub fn release_command(&mut self) {
        self.fixed_command = false;
    }

    /// Records every physics substep into a trajectory log.
    pub fn start_logging(&mut self) {
        self.log = Some(TrajectoryLog::new(1.0 / self.cfg.physics_dt()));
    }

    pub fn take_log(&mut self) -> Option<TrajectoryLog> {
        self.log.take()
    }

    pub fn actor_obs(&self) -> Vec<f64> {
        assemble_actor_obs(&self.command, &self.history, &self.state, &self.q_def, &self.action)
    }

    pub fn critic_obs(&self) -> Vec<f64> {
        assemble_critic_obs(&self.command, &self.state, &self.q_def, &self.action)
    }

    /// Starts a new episode, first moving the terrain level according to the
    /// episode that just ended.
    pub fn reset(&mut self) -> Result<()> {
        if self.episode.steps > 0 {
            let mut ended = std::mem::take(&mut self.episode);
            ended.level = self.level;
            ended.terrain = Some(self.terrain_kind);
            if self.cfg.terrain.curriculum && self.cfg.task == TaskKind::Locomotion {
                let next = terrain_curriculum_update(
                    self.level,
                    self.cfg.terrain.levels,
                    ended.traversed,
                    ended.commanded,
                    &self.cfg.terrain,
                );
                if next != self.level {
                    self.level = next;
                    self.terrain = make_terrain(self.terrain_kind, &self.cfg.terrain, next, self.seed)?;
                }
            } else if self.cfg.terrain.curriculum {
                let next = if ended.terminated {
                    self.level.saturating_sub(1)
                } else if ended.timeout {
                    (self.level + 1).min(self.cfg.terrain.levels - 1)
                } else {
                    self.level
                };
                if next != self.level {
                    self.level = next;
                    self.terrain = make_terrain(self.terrain_kind, &self.cfg.terrain, next, self.seed)?;
                }
            }
            self.finished = Some(ended);
        }

        self.draw = RandomizationDraw::sample(
            &self.cfg.randomization,
            (self.cfg.contact.mu_static, self.cfg.contact.mu_dynamic),
            &mut self.rng,
        );
        let added = self.draw.added_mass + self.cfg.base_mass_offset;
        self.model = self.nominal.with_added_base_mass(added)?;
        self.next_push = self.draw.first_push;

        let noise = self.cfg.randomization.initial_joint_noise;
        let mut state = GeneralizedState::new(&self.model);
        for (j, q) in state.joint_positions.iter_mut().enumerate() {
            let n = if noise > 0.0 { self.rng.gen_range(-noise..=noise) } else { 0.0 };
            *q = (self.q_def[j] + n).clamp(self.lower[j], self.upper[j]);
        }
        let half = 0.25 * self.terrain.size();
        let x = self.rng.gen_range(-half..=half);
        let y = self.rng.gen_range(-half..=half);
        let yaw = self.rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
        state.base_orientation = nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        state.base_position = Vector3::new(x, y, 0.0);
        let kin = Kinematics::new(&self.model, &state);
        let clearance = kin
            .foot_positions(&self.model)
            .iter()
            .map(|p| self.terrain.height_at(p.x, p.y) - p.z)
            .fold(f64::NEG_INFINITY, f64::max);
        state.base_position.z = clearance + 0.01;

        if !self.fixed_command {
            self.command = sample_command(self.cfg.task, &self.cfg.commands, &mut self.rng);
        }
        self.install_state(state);
        Ok(())
    }

    /// Replaces the physical state and clears all per-episode buffers, keeping
    /// terrain, randomization draw and command.
    pub fn reset_to(&mut self, state: GeneralizedState) -> Result<()> {
        state.check(&self.model)?;
        self.install_state(state);
        Ok(())
    }

    fn install_state(&mut self, state: GeneralizedState) {
        self.state = state;
        self.history.clear();
        self.action.iter_mut().for_each(|a| *a = 0.0);
        self.q_target.copy_from_slice(&self.q_def);
        self.prev_qd = self.state.joint_velocities().iter().copied().collect();
        self.last_tau.iter_mut().for_each(|t| *t = 0.0);
        self.contact = ContactState::none(self.model.feet.len());
        self.time = 0.0;
        self.steps = 0;
        self.command_timer = 0.0;
        self.episode = EpisodeStats {
            level: self.level,
            terrain: Some(self.terrain_kind),
            ..Default::default()
        };
        self.rig = self.cfg.rig.clone().map(|spec| {
            let p = self.attachment_point(&spec);
            RigRuntime::new(spec, &p)
        });
        if let Some(log) = &mut self.log {
            log.samples.clear();
        }
    }

    fn attachment_point(&self, spec: &RigSpec) -> Vector3<f64> {
        self.state.base_position + self.state.base_orientation * Vector3::from(spec.attachment)
    }

    /// Joint position targets for an action.
    pub fn apply_action(&self, action: &[f64]) -> Vec<f64> {
        apply_action(action, &self.q_def, &self.lower, &self.upper, self.cfg.action_scale)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != ACTION_DIM {
            return Err(Error::Dimension {
                what: "action",
                expected: ACTION_DIM,
                actual: action.len(),
            });
        }
        let previous_action = self.action.clone();
        let command = self.command;
        let mut impacts = Vec::new();
        let mut fault = None;
        if action.iter().all(|a| a.is_finite()) {
            self.q_target = self.apply_action(action);
            for _ in 0..self.cfg.substeps {
                if let Err(e) = self.physics_substep(&mut impacts) {
                    fault = Some(e.to_string());
                    break;
                }
            }
        } else {
            fault = Some("non-finite action".into());
        }
        self.action.copy_from_slice(action);
        self.steps += 1;

        if fault.is_none() && !self.state.is_finite() {
            fault = Some("non-finite state".into());
        }
        if let Some(msg) = fault {
            self.action.iter_mut().for_each(|a| *a = 0.0);
            return Ok(self.fault_result(command, msg));
        }

        let dt = self.cfg.control_dt;
        let qd: Vec<f64> = self.state.joint_velocities().iter().copied().collect();
        let qdd: Vec<f64> = qd.iter().zip(&self.prev_qd).map(|(a, b)| (a - b) / dt).collect();
        self.prev_qd.clone_from(&qd);
        let (v_body, w_body) = base_twist_body(&self.state);
        self.history.push(w_body);

        let (height, pitch) = self.terrain_relative_pose();
        let ctx = StepContext {
            command: Some(command),
            base_linear_velocity: Some(v_body),
            base_angular_velocity: Some(w_body),
            base_height: Some(height),
            base_pitch: Some(pitch),
            joint_torques: Some(self.last_tau.clone()),
            joint_velocities: Some(qd),
            joint_accelerations: Some(qdd),
            previous_action: Some(previous_action),
            action: Some(action.to_vec()),
            impacts: Some(impacts.clone()),
            gravity: Some(self.cfg.gravity),
            actuator: Some(self.cfg.actuator),
        };
        let breakdown = eval_reward(&self.reward_spec, &ctx)?;

        let c = command.to_array();
        let tracking_error = match command {
            Command::Locomotion { .. } => (c[0] - v_body.x).hypot(c[1] - v_body.y),
            Command::BasePose { .. } => (c[0] - height).abs(),
        };
        if let Command::Locomotion { vx, vy, .. } = command {
            let yaw = yaw_of(&self.state);
            let (s, co) = yaw.sin_cos();
            let cw = Vector3::new(co * vx - s * vy, s * vx + co * vy, 0.0);
            let speed = cw.norm();
            if speed > 1e-9 {
                let vw = self.state.base_linear_velocity();
                self.episode.traversed += vw.xy().dot(&cw.xy()) / speed * dt;
                self.episode.commanded += speed * dt;
            }
        }

        let cause = self.termination_cause();
        let terminated = cause.is_some();
        let timeout = !terminated && self.steps >= self.cfg.max_episode_steps();

        self.episode.steps += 1;
        self.episode.total_reward += breakdown.total;
        for t in &breakdown.terms {
            *self.episode.term_sums.entry(t.name.clone()).or_insert(0.0) += t.weighted;
            *self.episode.raw_sums.entry(t.name.clone()).or_insert(0.0) += t.raw;
        }
        self.episode.terminated = terminated;
        self.episode.timeout = timeout;

        self.command_timer += dt;
        if !self.fixed_command && self.command_timer >= self.cfg.command_resample_s - 1e-9 {
            self.command_timer = 0.0;
            self.command = sample_command(self.cfg.task, &self.cfg.commands, &mut self.rng);
        }

        Ok(StepResult {
            reward: breakdown.total,
            breakdown,
            done: terminated || timeout,
            terminated,
            timeout,
            fault: false,
            cause,
            info: StepInfo {
                command: c,
                tracking_error,
                base_linear_velocity: v_body.into(),
                base_angular_velocity: w_body.into(),
                base_height: height,
                base_pitch: pitch,
                impacts: impacts.len(),
            },
        })
    }

    fn fault_result(&mut self, command: Command, msg: String) -> StepResult {
        self.episode.steps += 1;
        self.episode.terminated = true;
        self.episode.fault = true;
        StepResult {
            reward: 0.0,
            breakdown: RewardBreakdown::default(),
            done: true,
            terminated: true,
            timeout: false,
            fault: true,
            cause: Some(TerminationCause::Fault(msg)),
            info: StepInfo {
                command: command.to_array(),
                ..Default::default()
            },
        }
    }

    fn physics_substep(&mut self, impacts: &mut Vec<ImpactEvent>) -> Result<()> {
        let dt = self.cfg.physics_dt();
        let model = &self.model;
        let nv = model.nv();
        let nj = model.joint_count();
        let kin = Kinematics::new(model, &self.state);

        let params = ContactParams {
            mu_static: self.draw.mu_static,
            mu_dynamic: self.draw.mu_dynamic,
            ..self.cfg.contact
        };
        let feet: Vec<Vector3<f64>> = model.feet.iter().map(|f| kin.point(f.link, &f.point)).collect();
        let foot_vel: Vec<Vector3<f64>> = model
            .feet
            .iter()
            .zip(&feet)
            .map(|(f, p)| kin.point_velocity(model, f.link, p, &self.state.velocity))
            .collect();
        let mut contact = contact_forces(&feet, &foot_vel, &self.terrain, &params);
        contact.mark_new_contacts(&self.contact);
        impacts.extend(detect_impacts(&self.contact, &contact, &foot_vel));

        let ff = if self.cfg.feedforward {
            leg_gravity_compensation_kin(model, &kin, &self.physics_gravity)
        } else {
            DVector::zeros(nj)
        };
        let act = &self.cfg.actuator;
        let mut rhs = -bias_forces_kin(model, &kin, &self.state.velocity) - gravity_forces_kin(model, &kin, &self.physics_gravity);
        let mut damping = DMatrix::<f64>::zeros(nv, nv);
        for j in 0..nj {
            let q = self.state.joint_positions[j];
            let qd = self.state.velocity[6 + j];
            let raw = act.kp * (self.q_target[j] - q) - act.kd * qd + ff[j];
            let pd = pd_torque(act, self.q_target[j], q, qd, ff[j]);
            let tau = limit_for_speed(act, pd, qd);
            self.last_tau[j] = tau;
            let joint = model.joint(j);
            rhs[6 + j] += tau - joint.damping * qd;
            let mut c = joint.damping;
            if raw.abs() < act.torque_limit && tau == pd {
                c += act.kd;
            }
            damping[(6 + j, 6 + j)] = c;
        }
        for ((foot, p), fc) in model.feet.iter().zip(&feet).zip(&contact.feet) {
            if !fc.in_contact {
                continue;
            }
            add_point_force(model, &kin, foot.link, p, &fc.force, &mut rhs);
            let d = fc.damping_matrix(&params);
            if d.iter().any(|&x| x != 0.0) {
                let jac = kin.point_jacobian(model, foot.link, p);
                damping += jac.transpose() * (d * &jac);
            }
        }
        let mut base_force = Vector3::from(self.draw.force);
        let base_com = kin.com[0];
        add_point_force(model, &kin, 0, &base_com, &base_force, &mut rhs);
        if let Some(rig) = &mut self.rig {
            let p = self.state.base_position + self.state.base_orientation * Vector3::from(rig.spec.attachment);
            let f = rig.step(dt, &p);
            add_point_force(model, &kin, 0, &p, &f, &mut rhs);
            base_force += f;
        }

        let mut m = mass_matrix_kin(model, &kin);
        m += damping * dt;
        let acc = solve_acceleration(m, rhs, BaseMode::Floating)?;
        self.state = integrate(&self.state, &acc, dt)?;
        self.contact = contact;
        self.time += dt;

        if let Some(t) = self.next_push {
            if self.time >= t {
                let dv = randomization::push_impulse(&self.cfg.randomization, &mut self.rng);
                let v = self.state.base_linear_velocity() + dv;
                self.state.set_base_linear_velocity(v);
                self.next_push = Some(t + randomization::next_push_interval(&self.cfg.randomization, &mut self.rng));
            }
        }

        if let Some(log) = &mut self.log {
            let q = self.state.quaternion_xyzw();
            let p = self.state.base_position;
            let v = self.state.base_linear_velocity();
            let w = self.state.base_angular_velocity();
            let mut contacts = [false; 4];
            for (c, f) in contacts.iter_mut().zip(&self.contact.feet) {
                *c = f.in_contact;
            }
            log.samples.push(LogSample {
                t: self.time,
                q: self.state.joint_positions.iter().copied().collect(),
                dq: self.state.joint_velocities().iter().copied().collect(),
                tau: self.last_tau.clone(),
                base_pose: [p.x, p.y, p.z, q[0], q[1], q[2], q[3]],
                base_twist: [v.x, v.y, v.z, w.x, w.y, w.z],
                contacts,
            });
        }
        Ok(())
    }

    /// Base height above the terrain below it and base pitch relative to the
    /// terrain slope along the heading.
    pub fn terrain_relative_pose(&self) -> (f64, f64) {
        let p = self.state.base_position;
        let height = p.z - self.terrain.height_at(p.x, p.y);
        let forward = self.state.base_orientation * Vector3::x();
        let pitch = -forward.z.clamp(-1.0, 1.0).asin();
        let horizontal = forward.xy();
        let n = horizontal.norm();
        let terrain_pitch = if n > 1e-9 {
            let (gx, gy) = self.terrain.gradient_at(p.x, p.y);
            -((gx * horizontal.x + gy * horizontal.y) / n).atan()
        } else {
            0.0
        };
        (height, pitch - terrain_pitch)
    }

    fn termination_cause(&self) -> Option<TerminationCause> {
        let (roll, pitch, _) = self.state.base_orientation.euler_angles();
        if roll.abs() > self.cfg.max_tilt || pitch.abs() > self.cfg.max_tilt {
            return Some(TerminationCause::Tilt);
        }
        if !self.cfg.body_contact_termination {
            return None;
        }
        let below = |p: &Vector3<f64>| p.z < self.terrain.height_at(p.x, p.y);
        let [bx, by, bz] = crate::dynamics::reference::BASE_SIZE;
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    let corner = self.state.base_position
                        + self.state.base_orientation * Vector3::new(sx * bx, sy * by, sz * bz);
                    if below(&corner) {
                        return Some(TerminationCause::BaseContact);
                    }
                }
            }
        }
        let kin = Kinematics::new(&self.model, &self.state);
        for foot in &self.model.feet {
            let chain = self.model.chain(foot.link);
            // The hip link and the hip-pitch pivot at its end.
            if let Some(&hip) = chain.first() {
                if below(&kin.origin[hip]) || chain.get(1).is_some_and(|&t| below(&kin.origin[t])) {
                    return Some(TerminationCause::HipContact);
                }
            }
        }
        None
    }
}

fn yaw_of(state: &GeneralizedState) -> f64 {
    let f = state.base_orientation * Vector3::x();
    f.y.atan2(f.x)
}

fn make_terrain(kind: TerrainKind, cfg: &TerrainConfig, level: usize, seed: u64) -> Result<HeightField> {
    let mut field = generate_terrain(kind, cfg.difficulty(level), seed)?;
    field.level = level;
    Ok(field)
}

/// `q* = σ·a + q_def`, clamped to the joint limits.
pub fn apply_action(action: &[f64], q_def: &[f64], lower: &[f64], upper: &[f64], scale: f64) -> Vec<f64> {
    action
        .iter()
        .zip(q_def)
        .zip(lower.iter().zip(upper))
        .map(|((a, d), (lo, hi))| (scale * a + d).clamp(*lo, *hi))
        .collect()
}
