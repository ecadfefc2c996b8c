//! Deterministic evaluation under the fixed command protocols.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::policy::Policy;
use super::train::Checkpoint;
use crate::actuation::{trajectory_power, TrajectoryLog, TrajectoryPower};
use crate::env::{
    rig_environment, Env, EnvConfig, EvalProtocol, RandomizationConfig, TerrainConfig, EVAL_DURATION_S,
};
use crate::error::{Error, Result};
use crate::reward::{Command, TaskKind};
use crate::rig::RigSpec;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// Anything that maps the current environment to an action.
pub trait Controller {
    fn act(&mut self, env: &Env) -> Vec<f64>;
}

impl Controller for Policy {
    fn act(&mut self, env: &Env) -> Vec<f64> {
        self.act_mean(&env.actor_obs())
    }
}

impl<F: FnMut(&Env) -> Vec<f64>> Controller for F {
    fn act(&mut self, env: &Env) -> Vec<f64> {
        self(env)
    }
}

/// Plays back a recorded action sequence, holding the last action afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPolicy {
    actions: Vec<Vec<f64>>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        ReplayPolicy { actions, next: 0 }
    }
}

impl Controller for ReplayPolicy {
    fn act(&mut self, env: &Env) -> Vec<f64> {
        let n = env.default_joint_positions().len();
        let a = self
            .actions
            .get(self.next)
            .or_else(|| self.actions.last())
            .cloned()
            .unwrap_or_else(|| vec![0.0; n]);
        self.next += 1;
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub duration_s: f64,
    pub seed: u64,
    /// Overrides the configured target gravity.
    pub gravity: Option<f64>,
    /// Runs at Earth gravity hanging from the offload rig.
    pub rig: Option<RigSpec>,
    /// Writes `trajectory.csv` and `summary.json` here.
    pub out_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { duration_s: EVAL_DURATION_S, seed: 0, gravity: None, rig: None, out_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub name: String,
    pub start_s: f64,
    pub end_s: f64,
    pub command: [f64; 3],
    pub steps: usize,
    /// Mean planar velocity error, m/s (locomotion).
    pub linear_velocity_error: f64,
    /// Mean yaw-rate error, rad/s.
    pub yaw_rate_error: f64,
    /// Mean terrain-relative height error, m (base pose).
    pub height_error: f64,
    /// Mean pitch error, rad (base pose).
    pub pitch_error: f64,
    /// Mean of the raw tracking reward terms.
    pub tracking_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub format_version: u32,
    pub protocol: String,
    pub task: TaskKind,
    /// Target gravity the policy is evaluated for, m/s².
    pub gravity: f64,
    /// Gravity acting in the simulation, m/s².
    pub physics_gravity: f64,
    pub rig: bool,
    pub seed: u64,
    pub duration_s: f64,
    pub steps: usize,
    /// Mean of the per-step tracking error (planar speed or height).
    pub tracking_error: f64,
    pub mean_tracking_reward: f64,
    /// Unweighted per-step means of every reward term.
    pub term_means: BTreeMap<String, f64>,
    /// Weighted per-step means of every reward term.
    pub weighted_term_means: BTreeMap<String, f64>,
    pub phases: Vec<PhaseMetrics>,
    pub falls: usize,
    pub fell: bool,
    /// Modeled drivetrain power, standby consumption excluded.
    pub avg_power_w: f64,
    pub power: TrajectoryPower,
    pub rig_max_radial_force_n: Option<f64>,
    pub rig_slack_events: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub summary: EvalSummary,
    pub log: TrajectoryLog,
    /// Actions issued at every control step.
    pub actions: Vec<Vec<f64>>,
    /// Joint positions after every control step.
    pub joint_positions: Vec<Vec<f64>>,
}

/// The environment configuration used for evaluation: flat ground, no
/// randomization, one episode spanning the whole protocol.
pub fn eval_env_config(base: &EnvConfig, opts: &EvalOptions) -> EnvConfig {
    let mut cfg = base.clone();
    if let Some(g) = opts.gravity {
        cfg.gravity = g;
    }
    cfg.terrain = TerrainConfig::flat();
    cfg.randomization = RandomizationConfig::disabled();
    cfg.episode_length_s = opts.duration_s + 1.0;
    match &opts.rig {
        Some(rig) => rig_environment(&cfg, rig.clone()),
        None => cfg,
    }
}

fn phase_errors(cmd: Command, info: &crate::env::StepInfo) -> [f64; 4] {
    let c = cmd.to_array();
    let wz = info.base_angular_velocity[2];
    match cmd {
        Command::Locomotion { .. } => [info.tracking_error, (c[2] - wz).abs(), 0.0, 0.0],
        Command::BasePose { .. } => [0.0, (c[2] - wz).abs(), (c[0] - info.base_height).abs(), (c[1] - info.base_pitch).abs()],
    }
}

/// Runs `controller` through the protocol. Falls are counted and followed by
/// a reset; the trajectory log spans the whole run.
pub fn evaluate(
    controller: &mut dyn Controller,
    env_cfg: &EnvConfig,
    protocol: EvalProtocol,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    if protocol.task() != env_cfg.task {
        return Err(Error::Checkpoint(format!(
            "protocol {protocol} needs a {} policy, got {}",
            protocol.task(),
            env_cfg.task
        )));
    }
    if !(opts.duration_s > 0.0 && opts.duration_s.is_finite()) {
        return Err(Error::Config(format!("evaluation duration must be positive, got {}", opts.duration_s)));
    }
    let cfg = eval_env_config(env_cfg, opts);
    let duration = opts.duration_s;
    let mut env = Env::new(cfg.clone(), opts.seed)?;
    let mut command = protocol.command_at(0.0, duration);
    env.set_command(command)?;
    env.reset()?;
    env.start_logging();

    let phases_def = protocol.phases(duration);
    let mut phases: Vec<PhaseMetrics> = phases_def
        .iter()
        .map(|p| PhaseMetrics {
            name: p.name.clone(),
            start_s: p.start_s,
            end_s: p.end_s,
            command: p.command.to_array(),
            ..Default::default()
        })
        .collect();
    let dt = cfg.control_dt;
    let steps = (duration / dt).round() as usize;
    let mut log = TrajectoryLog::new(1.0 / cfg.physics_dt());
    let mut actions = Vec::with_capacity(steps);
    let mut joint_positions = Vec::with_capacity(steps);
    let mut term_sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut weighted_sums: BTreeMap<String, f64> = BTreeMap::new();
    let (mut tracking_error, mut tracking_reward) = (0.0, 0.0);
    let mut falls = 0;
    let mut max_radial: Option<f64> = None;
    let mut slack_events: Option<usize> = None;
    for k in 0..steps {
        let t = k as f64 * dt;
        let c = protocol.command_at(t, duration);
        if c != command {
            command = c;
            env.set_command(command)?;
        }
        let a = controller.act(&env);
        let r = env.step(&a)?;
        actions.push(a);
        joint_positions.push(env.state().joint_positions.iter().copied().collect());
        tracking_error += r.info.tracking_error;
        tracking_reward += r.breakdown.tracking;
        for term in &r.breakdown.terms {
            *term_sums.entry(term.name.clone()).or_default() += term.raw;
            *weighted_sums.entry(term.name.clone()).or_default() += term.weighted;
        }
        let p = phases_def.iter().position(|p| t < p.end_s).unwrap_or(phases.len() - 1);
        let e = phase_errors(command, &r.info);
        let ph = &mut phases[p];
        ph.steps += 1;
        ph.linear_velocity_error += e[0];
        ph.yaw_rate_error += e[1];
        ph.height_error += e[2];
        ph.pitch_error += e[3];
        ph.tracking_reward += r.breakdown.tracking;
        if let Some(rig) = env.rig() {
            max_radial = Some(max_radial.unwrap_or(0.0).max(rig.max_radial_force));
        }
        if r.done {
            if r.terminated || r.fault {
                falls += 1;
            }
            if let Some(rig) = env.rig() {
                *slack_events.get_or_insert(0) += rig.slack_events;
            }
            if let Some(part) = env.take_log() {
                log.samples.extend(part.samples);
            }
            env.reset()?;
            env.start_logging();
        }
    }
    if let Some(rig) = env.rig() {
        *slack_events.get_or_insert(0) += rig.slack_events;
    }
    if let Some(part) = env.take_log() {
        log.samples.extend(part.samples);
    }
    let period = 1.0 / log.rate_hz;
    for (i, s) in log.samples.iter_mut().enumerate() {
        s.t = i as f64 * period;
    }
    let power = trajectory_power(&log, &cfg.actuator)?;

    for ph in &mut phases {
        let n = ph.steps.max(1) as f64;
        ph.linear_velocity_error /= n;
        ph.yaw_rate_error /= n;
        ph.height_error /= n;
        ph.pitch_error /= n;
        ph.tracking_reward /= n;
    }
    let n = steps.max(1) as f64;
    let summary = EvalSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        protocol: protocol.name().into(),
        task: cfg.task,
        gravity: cfg.gravity,
        physics_gravity: cfg.physics_gravity(),
        rig: cfg.rig.is_some(),
        seed: opts.seed,
        duration_s: duration,
        steps,
        tracking_error: tracking_error / n,
        mean_tracking_reward: tracking_reward / n,
        term_means: term_sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
        weighted_term_means: weighted_sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
        phases,
        falls,
        fell: falls > 0,
        avg_power_w: power.average_power_w,
        power,
        rig_max_radial_force_n: max_radial,
        rig_slack_events: slack_events,
    };
    let run = EvalRun { summary, log, actions, joint_positions };
    if let Some(dir) = &opts.out_dir {
        write_eval_outputs(dir, &run)?;
    }
    Ok(run)
}

/// Evaluates a checkpoint's policy in its own environment configuration.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, protocol: EvalProtocol, opts: &EvalOptions) -> Result<EvalRun> {
    let mut policy = ckpt.policy.clone();
    evaluate(&mut policy, &ckpt.env, protocol, opts)
}

pub fn write_eval_outputs(dir: &Path, run: &EvalRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    run.log.write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &run.summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::winding_loss;
    use crate::dynamics::{add_point_force, gravity_forces_kin, GravityEnv, Kinematics};
    use crate::terrain::contact_forces;

    fn short(secs: f64) -> EvalOptions {
        EvalOptions { duration_s: secs, ..Default::default() }
    }

    #[test]
    fn replay_reproduces_joint_trajectory() {
        let cfg = EnvConfig::flat(TaskKind::Locomotion, 9.81);
        let mut wobble = |env: &Env| -> Vec<f64> {
            let t = env.time();
            (0..12).map(|j| 0.3 * (3.0 * t + j as f64).sin()).collect()
        };
        let first = evaluate(&mut wobble, &cfg, EvalProtocol::Loco04, &short(3.0)).unwrap();
        let mut replay = ReplayPolicy::new(first.actions.clone());
        let second = evaluate(&mut replay, &cfg, EvalProtocol::Loco04, &short(3.0)).unwrap();
        let err = first
            .joint_positions
            .iter()
            .zip(&second.joint_positions)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert_eq!(first.summary, second.summary);
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let cfg = EnvConfig::flat(TaskKind::Locomotion, 9.81);
        let mut zero = |_: &Env| vec![0.0; 12];
        assert!(matches!(
            evaluate(&mut zero, &cfg, EvalProtocol::BasePoseSeq, &short(1.0)),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn summary_schema_and_phases() {
        let cfg = EnvConfig::flat(TaskKind::BasePose, 3.73);
        let mut zero = |_: &Env| vec![0.0; 12];
        let dir = tempfile::tempdir().unwrap();
        let opts = EvalOptions { duration_s: 3.0, out_dir: Some(dir.path().into()), ..Default::default() };
        let run = evaluate(&mut zero, &cfg, EvalProtocol::BasePoseSeq, &opts).unwrap();
        let s = &run.summary;
        assert_eq!(s.phases.len(), 3);
        assert_eq!(s.phases[1].command, [0.32, 0.5, 0.0]);
        assert_eq!(s.phases[2].command, [0.32, 0.0, 0.5]);
        assert_eq!(s.phases.iter().map(|p| p.steps).sum::<usize>(), 150);
        assert!(s.term_means.contains_key("height_tracking"));
        assert!(s.power.winding_average_w > 0.0);
        let json: serde_json::Value =
            serde_json::from_reader(File::open(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(json["avg_power_w"].as_f64().unwrap() > 0.0);
        assert_eq!(json["format_version"], 1);
        let log = TrajectoryLog::read_csv(File::open(dir.path().join("trajectory.csv")).unwrap()).unwrap();
        assert_eq!(log.samples.len(), 600);
    }

    #[test]
    fn standing_power_is_static_winding_loss() {
        let cfg = EnvConfig::flat(TaskKind::Locomotion, 9.81);
        let mut oracle = Vec::new();
        let mut stand = |env: &Env| -> Vec<f64> {
            let model = env.model();
            let state = env.state();
            let kin = Kinematics::new(model, state);
            let feet: Vec<_> = model.feet.iter().map(|f| kin.point(f.link, &f.point)).collect();
            let vel: Vec<_> = model
                .feet
                .iter()
                .zip(&feet)
                .map(|(f, p)| kin.point_velocity(model, f.link, p, &state.velocity))
                .collect();
            let forces = contact_forces(&feet, &vel, env.terrain(), &env.config().contact);
            let mut tau = gravity_forces_kin(model, &kin, &GravityEnv::earth());
            for ((foot, p), fc) in model.feet.iter().zip(&feet).zip(&forces.feet) {
                add_point_force(model, &kin, foot.link, p, &(-fc.force), &mut tau);
            }
            oracle.push((0..12).map(|j| winding_loss(tau[6 + j], &env.config().actuator)).sum::<f64>());
            vec![0.0; 12]
        };
        let run = evaluate(&mut stand, &cfg, EvalProtocol::Loco04, &short(6.0)).unwrap();
        // Compare the settled second half.
        let half = oracle.len() / 2;
        let expected = oracle[half..].iter().sum::<f64>() / (oracle.len() - half) as f64;
        let settled = TrajectoryLog {
            rate_hz: run.log.rate_hz,
            samples: run.log.samples[run.log.samples.len() / 2..].to_vec(),
        };
        let measured = trajectory_power(&settled, &cfg.actuator).unwrap().average_power_w;
        assert!((measured - expected).abs() < 0.05 * expected, "{measured} vs {expected}");
        assert!(!run.summary.fell);
        assert!((run.summary.avg_power_w - run.summary.power.average_power_w).abs() < 1e-12);
    }
}
