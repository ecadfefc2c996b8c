//! `gravsim`: train, evaluate and sweep variable-gravity quadruped policies,
//! report modeled power and plan offload-rig compensation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gravsim::actuation::ActuatorParams;
use gravsim::env::EvalProtocol;
use gravsim::harness::{self, RunConfig, SweepOptions};
use gravsim::ppo::EvalOptions;
use gravsim::reward::{Regularization, TaskKind};
use gravsim::rig::{plan_compensation, RigPlan, RigSpec};
use gravsim::{Error, Result};

#[derive(Parser)]
#[command(name = "gravsim", version, about = "Variable-gravity quadruped training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy.
    Train(TrainArgs),
    /// Evaluate a checkpoint with a fixed protocol.
    Eval(EvalArgs),
    /// Train and evaluate every cell of the gravity × reward × scaling × task grid.
    Sweep(SweepArgs),
    /// Modeled drivetrain power of a trajectory log.
    PowerReport(PowerArgs),
    /// Close the force budget of the gravity offload rig.
    RigPlan(RigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Rewards {
    Baseline,
    Power,
}

impl From<Rewards> for Regularization {
    fn from(r: Rewards) -> Self {
        match r {
            Rewards::Baseline => Regularization::Baseline,
            Rewards::Power => Regularization::PowerOptimized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Locomotion,
    BasePose,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Locomotion => TaskKind::Locomotion,
            Task::BasePose => TaskKind::BasePose,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    #[value(name = "loco-0.4")]
    Loco04,
    BasePoseSeq,
}

impl From<Protocol> for EvalProtocol {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Loco04 => EvalProtocol::Loco04,
            Protocol::BasePoseSeq => EvalProtocol::BasePoseSeq,
        }
    }
}

/// Overrides shared by `train` and `sweep`.
#[derive(Args)]
struct Common {
    /// TOML run configuration; `include` entries are resolved relative to it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Parallel environments.
    #[arg(long)]
    envs: Option<usize>,
    /// Output directory; defaults to $GRAVSIM_OUT/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Target gravity, m/s².
    #[arg(long, allow_negative_numbers = true)]
    gravity: Option<f64>,
    #[arg(long, value_enum)]
    rewards: Option<Rewards>,
    #[arg(long, value_enum)]
    scale_gravity: Option<Switch>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the protocol of the checkpoint's task.
    #[arg(long, value_enum)]
    protocol: Option<Protocol>,
    /// Physics gravity, m/s²; the checkpoint's training gravity by default.
    #[arg(long, allow_negative_numbers = true)]
    gravity: Option<f64>,
    /// Run on the offload rig in Earth gravity.
    #[arg(long)]
    rig: bool,
    /// Rig spring force, N.
    #[arg(long, requires = "rig")]
    rig_force: Option<f64>,
    /// Seconds.
    #[arg(long, default_value_t = gravsim::env::EVAL_DURATION_S)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated tasks.
    #[arg(long, value_enum, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    /// Comma-separated gravity levels, m/s².
    #[arg(long, value_delimiter = ',')]
    gravities: Option<Vec<f64>>,
    /// Cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Evaluation duration per cell, s.
    #[arg(long)]
    eval_duration: Option<f64>,
}

#[derive(Args)]
struct PowerArgs {
    /// Trajectory CSV.
    #[arg(long)]
    log: PathBuf,
    /// Run configuration providing the motor parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Constant standby draw to subtract from the average, W.
    #[arg(long)]
    subtract_standby: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RigArgs {
    /// Robot mass, kg.
    #[arg(long)]
    mass: f64,
    /// Target gravity, m/s².
    #[arg(long, allow_negative_numbers = true)]
    gravity: f64,
    /// Offload force the rig delivers, N.
    #[arg(long, allow_negative_numbers = true)]
    measured_offload: f64,
    /// Mass removed from the robot for rig tests, kg.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    battery_mass: f64,
    #[arg(long)]
    json: bool,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = c.iterations {
        cfg.train.max_iterations = n;
        cfg.sweep.iterations = Some(n);
    }
    if let Some(n) = c.envs {
        cfg.train.n_envs = n;
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    if let Some(t) = args.task {
        cfg.env.task = t.into();
    }
    if let Some(g) = args.gravity {
        cfg.env.gravity = g;
    }
    if let Some(r) = args.rewards {
        cfg.env.regularization = r.into();
    }
    if let Some(s) = args.scale_gravity {
        cfg.env.gravity_scaling = matches!(s, Switch::On);
    }
    cfg.validate()?;
    let dir = harness::output_dir(args.common.out.as_deref(), "train");
    eprintln!(
        "training {} at g = {} m/s² ({} rewards, scaling {}) into {}",
        cfg.env.task,
        cfg.env.gravity,
        cfg.env.regularization,
        if cfg.env.gravity_scaling { "on" } else { "off" },
        dir.display()
    );
    let last = cfg.train.max_iterations.saturating_sub(1);
    let out = harness::run_train(&cfg, &dir, &mut |m| {
        if m.iteration % 10 == 0 || m.iteration == last {
            eprintln!(
                "iter {:5}  reward {:8.4}  tracking {:.3}  fall rate {:.2}  power curriculum {:.2}",
                m.iteration, m.mean_reward, m.mean_tracking, m.fall_rate, m.power_progress
            );
        }
    })?;
    if let Some(c) = out.checkpoints.last() {
        println!("{}", c.display());
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let rig = args.rig.then(|| RigSpec {
        spring_force: args.rig_force.unwrap_or(RigSpec::default().spring_force),
        ..RigSpec::default()
    });
    if let Some(r) = &rig {
        r.validate()?;
    }
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(Error::Config(format!("--duration must be positive, got {}", args.duration)));
    }
    if let Some(g) = args.gravity {
        gravsim::reward::gravity_factor(g)?;
    }
    let opts = EvalOptions {
        duration_s: args.duration,
        seed: args.seed,
        gravity: args.gravity,
        rig,
        out_dir: None,
    };
    let dir = harness::output_dir(args.out.as_deref(), "eval");
    let run = harness::run_eval(&args.checkpoint, args.protocol.map(Into::into), &opts, &dir)?;
    let s = &run.summary;
    println!(
        "{}: tracking reward {:.3}, tracking error {:.3}, falls {}, average power {:.1} W",
        s.protocol, s.mean_tracking_reward, s.tracking_error, s.falls, s.avg_power_w
    );
    for p in &s.phases {
        println!(
            "  {:<12} {:5.1}-{:5.1} s  reward {:.3}  |e_v| {:.3}  |e_yaw| {:.3}  |e_h| {:.3}  |e_pitch| {:.3}",
            p.name, p.start_s, p.end_s, p.tracking_reward, p.linear_velocity_error, p.yaw_rate_error, p.height_error, p.pitch_error
        );
    }
    println!("{}", dir.join("summary.json").display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    if let Some(tasks) = &args.tasks {
        cfg.sweep.tasks = tasks.iter().map(|&t| t.into()).collect();
    }
    if let Some(g) = &args.gravities {
        cfg.sweep.gravities = g.clone();
    }
    if let Some(d) = args.eval_duration {
        cfg.eval.duration_s = d;
    }
    if args.workers == 0 {
        return Err(Error::Config("--workers must be ≥ 1".into()));
    }
    cfg.validate()?;
    let dir = harness::output_dir(args.common.out.as_deref(), "sweep");
    let cells = cfg.sweep.cells().len();
    eprintln!("sweeping {cells} cells into {}", dir.display());
    let report = harness::run_sweep(&cfg, &dir, &SweepOptions { workers: args.workers }, &|c| {
        let status = match (&c.metrics, &c.error) {
            (Some(m), _) => format!(
                "{:.1} W, tracking {:.3}, falls {}{}",
                m.avg_power_w,
                m.mean_tracking_reward,
                m.falls,
                if c.resumed { " (resumed)" } else { "" }
            ),
            (None, Some(e)) => format!("failed: {e}"),
            (None, None) => "failed".into(),
        };
        eprintln!("{:<48} {status}", c.id);
    })?;
    print!("{}", report.to_markdown());
    if report.failed > 0 {
        eprintln!("{} of {} cells failed; see sweep_report.json", report.failed, report.cells.len());
    }
    Ok(())
}

fn power_report(args: PowerArgs) -> Result<()> {
    let params: ActuatorParams = load_config(args.config.as_deref())?.env.actuator;
    let r = harness::power_report(&args.log, &params, args.subtract_standby)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        print!("{}", r.to_text());
    }
    Ok(())
}

fn rig_table(p: &RigPlan) -> String {
    format!(
        "robot mass          {:8.3} kg\ntarget gravity      {:8.3} m/s²\nrequired offload    {:8.3} N\nmeasured offload    {:8.3} N\ndeficit             {:8.3} N\nbattery removed     {:8.3} kg\nbattery credit      {:8.3} N\nresidual            {:8.3} N\nadded sim mass      {:8.3} kg\n",
        p.mass,
        p.target_gravity,
        p.required_offload,
        p.measured_offload,
        p.deficit,
        p.battery_mass,
        p.battery_credit,
        p.residual,
        p.added_mass
    )
}

fn rig_plan(args: RigArgs) -> Result<()> {
    let plan = plan_compensation(args.mass, args.gravity, args.measured_offload, args.battery_mass)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&plan)?);
    } else {
        print!("{}", rig_table(&plan));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::PowerReport(a) => power_report(a),
        Command::RigPlan(a) => rig_plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
