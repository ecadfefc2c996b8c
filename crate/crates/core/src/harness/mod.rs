//! Run orchestration behind the command-line front end: configuration files,
//! manifests, training and evaluation runs, the gravity sweep and power
//! reports.

pub mod config;
pub mod manifest;
pub mod report;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{config_hash, EvalConfig, RunConfig};
pub use manifest::{RunManifest, RunStatus, MANIFEST_FILE, TOOLKIT_VERSION};
pub use report::{power_report, PowerReport, POWER_REPORT_FORMAT_VERSION};
pub use sweep::{run_sweep, CellResult, CellSpec, SweepGrid, SweepOptions, SweepReport, SWEEP_FORMAT_VERSION};

use crate::env::EvalProtocol;
use crate::error::{Error, Result};
use crate::ppo::{self, Checkpoint, EvalOptions, EvalRun, IterationMetrics, TrainOutput};
use crate::rig::RigSpec;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "GRAVSIM_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Bad or missing input maps to 2, failures while running to 3.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Model(_)
        | Error::Log(_)
        | Error::Checkpoint(_)
        | Error::Json(_)
        | Error::Dimension { .. }
        | Error::MissingContext(_) => EXIT_CONFIG,
        Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData) => {
            EXIT_CONFIG
        }
        Error::Io(_) | Error::InfeasiblePlan(_) | Error::Training(_) | Error::NonFinite(_) | Error::Index { .. } => {
            EXIT_RUNTIME
        }
    }
}

/// `explicit`, else `$GRAVSIM_OUT/<name>`, else `runs/<name>`.
pub fn output_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name),
    }
}

fn run_with_manifest<T>(
    dir: &Path,
    mut manifest: RunManifest,
    body: impl FnOnce(&mut RunManifest) -> Result<T>,
) -> Result<T> {
    fs::create_dir_all(dir)?;
    manifest.write(dir)?;
    let result = body(&mut manifest);
    manifest.finish(result.as_ref().err());
    manifest.write(dir)?;
    result
}

/// Trains under `dir`: resolved `config.toml`, `metrics.jsonl`, checkpoints
/// and the manifest.
pub fn run_train(
    cfg: &RunConfig,
    dir: &Path,
    on_iteration: &mut dyn FnMut(&IterationMetrics),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let manifest = RunManifest::start("train", cfg.hash(), cfg.train.seed);
    run_with_manifest(dir, manifest, |m| {
        let config_path = dir.join("config.toml");
        let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&config_path, text)?;
        m.add_artifact(dir, &config_path);
        let out = ppo::train(&cfg.train, &cfg.env, Some(dir), on_iteration)?;
        m.add_artifact(dir, &dir.join("metrics.jsonl"));
        for c in &out.checkpoints {
            m.add_artifact(dir, c);
        }
        Ok(out)
    })
}

#[derive(Serialize)]
struct EvalKey<'a> {
    checkpoint: &'a str,
    protocol: &'a str,
    duration_s: f64,
    gravity: Option<f64>,
    rig: Option<&'a RigSpec>,
}

/// Evaluates a saved checkpoint and writes `trajectory.csv`, `summary.json`
/// and the manifest to `dir`. The protocol defaults to the checkpoint's task.
pub fn run_eval(checkpoint: &Path, protocol: Option<EvalProtocol>, opts: &EvalOptions, dir: &Path) -> Result<EvalRun> {
    if !checkpoint.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let protocol = protocol.unwrap_or_else(|| EvalProtocol::for_task(ckpt.env.task));
    let text = fs::read_to_string(checkpoint)?;
    let key = EvalKey {
        checkpoint: &config_hash(&text),
        protocol: protocol.name(),
        duration_s: opts.duration_s,
        gravity: opts.gravity,
        rig: opts.rig.as_ref(),
    };
    let manifest = RunManifest::start("eval", config_hash(&key), opts.seed);
    run_with_manifest(dir, manifest, |m| {
        let opts = EvalOptions { out_dir: None, ..opts.clone() };
        let run = ppo::evaluate_checkpoint(&ckpt, protocol, &opts)?;
        ppo::write_eval_outputs(dir, &run)?;
        m.add_artifact(dir, &dir.join("trajectory.csv"));
        m.add_artifact(dir, &dir.join("summary.json"));
        Ok(run)
    })
}
