//! The gravity × reward set × scaling × task grid.
//!
//! Every cell trains a policy and evaluates it with its task's protocol in a
//! directory of its own. A cell whose manifest is complete for the same
//! configuration hash is loaded instead of retrained, so an interrupted sweep
//! resumes where it stopped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::{RunManifest, RunStatus};
use crate::dynamics::EARTH_GRAVITY;
use crate::env::EvalProtocol;
use crate::error::{Error, Result};
use crate::ppo::{self, EvalOptions, EvalSummary};
use crate::reward::{Regularization, TaskKind};

pub const SWEEP_FORMAT_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "sweep_report.json";
pub const REPORT_MARKDOWN: &str = "sweep_report.md";

/// Mean tracking reward a fall-free evaluation needs to count as functional.
pub const TRACKING_GATE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub gravities: Vec<f64>,
    pub rewards: Vec<Regularization>,
    pub scaling: Vec<bool>,
    pub tasks: Vec<TaskKind>,
    /// Training iterations per cell; `train.max_iterations` when absent.
    pub iterations: Option<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            gravities: vec![1.62, 3.73, EARTH_GRAVITY, 2.0 * EARTH_GRAVITY],
            rewards: vec![Regularization::Baseline, Regularization::PowerOptimized],
            scaling: vec![true, false],
            tasks: vec![TaskKind::Locomotion, TaskKind::BasePose],
            iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub task: TaskKind,
    pub gravity: f64,
    pub rewards: Regularization,
    pub gravity_scaling: bool,
}

impl CellSpec {
    pub fn id(&self) -> String {
        format!(
            "{}_g{}_{}_{}",
            self.task,
            self.gravity,
            self.rewards,
            if self.gravity_scaling { "scaled" } else { "unscaled" }
        )
    }

    /// Column label within a gravity row.
    pub fn variant(&self) -> String {
        format!(
            "{} {}, {}",
            self.task,
            self.rewards,
            if self.gravity_scaling { "scaled" } else { "not scaled" }
        )
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.env.task = self.task;
        cfg.env.gravity = self.gravity;
        cfg.env.regularization = self.rewards;
        cfg.env.gravity_scaling = self.gravity_scaling;
        if let Some(n) = base.sweep.iterations {
            cfg.train.max_iterations = n;
        }
        cfg
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.gravities.is_empty() || self.rewards.is_empty() || self.scaling.is_empty() || self.tasks.is_empty() {
            return Err(Error::Config("every sweep axis needs at least one value".into()));
        }
        for &g in &self.gravities {
            crate::reward::gravity_factor(g)?;
        }
        if self.iterations == Some(0) {
            return Err(Error::Config("sweep.iterations must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Cells in report order: task, gravity, reward set, scaling.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for &task in &self.tasks {
            for &gravity in &self.gravities {
                for &rewards in &self.rewards {
                    for &gravity_scaling in &self.scaling {
                        out.push(CellSpec { task, gravity, rewards, gravity_scaling });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    /// No falls and tracking at or above [`TRACKING_GATE`].
    Functional,
    /// No falls, weaker tracking.
    Degraded,
    Fell,
}

impl Gate {
    pub fn of(summary: &EvalSummary) -> Gate {
        if summary.falls > 0 {
            Gate::Fell
        } else if summary.mean_tracking_reward >= TRACKING_GATE {
            Gate::Functional
        } else {
            Gate::Degraded
        }
    }

    fn mark(self) -> &'static str {
        match self {
            Gate::Functional => "✓",
            Gate::Degraded => "~",
            Gate::Fell => "✗",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub avg_power_w: f64,
    pub mean_tracking_reward: f64,
    pub tracking_error: f64,
    pub falls: usize,
    pub gate: Gate,
    /// Mean tracking reward over the last training iteration.
    pub final_train_tracking: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub spec: CellSpec,
    pub id: String,
    /// Relative to the sweep root.
    pub dir: PathBuf,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    /// Loaded from an earlier run instead of trained.
    pub resumed: bool,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub format_version: u32,
    pub iterations: usize,
    pub cells: Vec<CellResult>,
    pub completed: usize,
    pub failed: usize,
    pub resumed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Cells trained concurrently.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { workers: 1 }
    }
}

const SUMMARY: &str = "summary.json";

fn cell_metrics(summary: &EvalSummary, final_train_tracking: Option<f64>) -> CellMetrics {
    CellMetrics {
        avg_power_w: summary.avg_power_w,
        mean_tracking_reward: summary.mean_tracking_reward,
        tracking_error: summary.tracking_error,
        falls: summary.falls,
        gate: Gate::of(summary),
        final_train_tracking,
    }
}

fn last_train_tracking(dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(dir.join("metrics.jsonl")).ok()?;
    let line = text.lines().last()?;
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    v.get("mean_tracking")?.as_f64()
}

/// Loads a finished cell, or `None` when it has to be (re)run.
fn resume_cell(dir: &Path, hash: &str) -> Option<(EvalSummary, Option<PathBuf>)> {
    let manifest = RunManifest::read(dir).ok()?;
    if !manifest.is_complete_for(dir, hash) {
        return None;
    }
    let summary: EvalSummary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY)).ok()?).ok()?;
    let checkpoint = manifest
        .artifacts
        .iter()
        .filter(|a| a.starts_with("checkpoints"))
        .max()
        .map(|a| dir.join(a));
    Some((summary, checkpoint))
}

fn train_cell(cfg: &RunConfig, dir: &Path, hash: &str) -> Result<(EvalSummary, Option<PathBuf>)> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    let mut manifest = RunManifest::start("sweep-cell", hash.to_string(), cfg.train.seed);
    fs::create_dir_all(dir)?;
    manifest.write(dir)?;
    let result = (|| {
        let config_path = dir.join("config.toml");
        fs::write(&config_path, toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?)?;
        manifest.add_artifact(dir, &config_path);
        let mut out = ppo::train(&cfg.train, &cfg.env, Some(dir), &mut |_| {})?;
        manifest.add_artifact(dir, &dir.join("metrics.jsonl"));
        for c in &out.checkpoints {
            manifest.add_artifact(dir, c);
        }
        let opts = EvalOptions {
            duration_s: cfg.eval.duration_s,
            seed: cfg.eval.seed,
            ..Default::default()
        };
        let run = ppo::evaluate(&mut out.policy, &cfg.env, EvalProtocol::for_task(cfg.env.task), &opts)?;
        ppo::write_eval_outputs(dir, &run)?;
        manifest.add_artifact(dir, &dir.join("trajectory.csv"));
        manifest.add_artifact(dir, &dir.join(SUMMARY));
        Ok((run.summary, out.checkpoints.last().cloned()))
    })();
    manifest.finish(result.as_ref().err());
    manifest.write(dir)?;
    result
}

fn run_cell(base: &RunConfig, spec: CellSpec, root: &Path) -> CellResult {
    let cfg = spec.apply(base);
    let hash = cfg.hash();
    let rel = PathBuf::from("cells").join(spec.id());
    let dir = root.join(&rel);
    let mut result = CellResult {
        spec,
        id: spec.id(),
        dir: rel,
        seed: cfg.train.seed,
        config_hash: hash.clone(),
        status: RunStatus::Completed,
        resumed: false,
        checkpoint: None,
        metrics: None,
        error: None,
    };
    let outcome = match resume_cell(&dir, &hash) {
        Some(done) => {
            result.resumed = true;
            Ok(done)
        }
        None => train_cell(&cfg, &dir, &hash),
    };
    match outcome {
        Ok((summary, checkpoint)) => {
            result.metrics = Some(cell_metrics(&summary, last_train_tracking(&dir)));
            result.checkpoint = checkpoint.map(|c| c.strip_prefix(root).map(Path::to_path_buf).unwrap_or(c));
        }
        Err(e) => {
            result.status = RunStatus::Failed;
            result.error = Some(e.to_string());
        }
    }
    result
}

/// Runs every cell of `cfg.sweep` under `root` and writes the JSON and
/// Markdown reports. Fails only when no cell succeeded.
pub fn run_sweep(
    cfg: &RunConfig,
    root: &Path,
    opts: &SweepOptions,
    on_cell: &(dyn Fn(&CellResult) + Sync),
) -> Result<SweepReport> {
    cfg.validate()?;
    fs::create_dir_all(root)?;
    let mut manifest = RunManifest::start("sweep", cfg.hash(), cfg.train.seed);
    manifest.write(root)?;
    let cells = cfg.sweep.cells();
    let results: Vec<CellResult> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let done = Mutex::new(());
        pool.install(|| {
            cells
                .par_iter()
                .map(|&spec| {
                    let r = run_cell(cfg, spec, root);
                    let _guard = done.lock().unwrap();
                    on_cell(&r);
                    r
                })
                .collect()
        })
    } else {
        cells
            .iter()
            .map(|&spec| {
                let r = run_cell(cfg, spec, root);
                on_cell(&r);
                r
            })
            .collect()
    };
    let completed = results.iter().filter(|r| r.status == RunStatus::Completed).count();
    let report = SweepReport {
        format_version: SWEEP_FORMAT_VERSION,
        iterations: cfg.sweep.iterations.unwrap_or(cfg.train.max_iterations),
        completed,
        failed: results.len() - completed,
        resumed: results.iter().filter(|r| r.resumed).count(),
        cells: results,
    };
    let json_path = root.join(REPORT_JSON);
    fs::write(&json_path, serde_json::to_vec_pretty(&report)?)?;
    let md_path = root.join(REPORT_MARKDOWN);
    fs::write(&md_path, report.to_markdown())?;
    manifest.add_artifact(root, &json_path);
    manifest.add_artifact(root, &md_path);
    let outcome = if completed == 0 {
        Err(Error::Training(format!("all {} sweep cells failed", report.cells.len())))
    } else {
        Ok(())
    };
    manifest.finish(outcome.as_ref().err());
    manifest.write(root)?;
    outcome.map(|()| report)
}

impl SweepReport {
    /// One table per task: rows are gravity levels, columns the reward set and
    /// scaling variants. Each entry is the modeled power with the numeric gate
    /// (✓ functional, ~ weak tracking, ✗ fell).
    pub fn to_markdown(&self) -> String {
        let mut s = format!("# Gravity sweep ({} iterations per cell)\n", self.iterations);
        let mut tasks: Vec<TaskKind> = Vec::new();
        for c in &self.cells {
            if !tasks.contains(&c.spec.task) {
                tasks.push(c.spec.task);
            }
        }
        for task in tasks {
            let cells: Vec<&CellResult> = self.cells.iter().filter(|c| c.spec.task == task).collect();
            let mut variants: Vec<(Regularization, bool)> = Vec::new();
            let mut gravities: Vec<f64> = Vec::new();
            for c in &cells {
                let v = (c.spec.rewards, c.spec.gravity_scaling);
                if !variants.contains(&v) {
                    variants.push(v);
                }
                if !gravities.contains(&c.spec.gravity) {
                    gravities.push(c.spec.gravity);
                }
            }
            let _ = write!(s, "\n## {task}\n\n| gravity (m/s²) |");
            for (r, scaled) in &variants {
                let _ = write!(s, " {r}, {} |", if *scaled { "scaled" } else { "not scaled" });
            }
            s.push_str("\n|---|");
            s.push_str(&"---|".repeat(variants.len()));
            s.push('\n');
            for g in gravities {
                let _ = write!(s, "| {g} |");
                for (r, scaled) in &variants {
                    let cell = cells
                        .iter()
                        .find(|c| c.spec.gravity == g && c.spec.rewards == *r && c.spec.gravity_scaling == *scaled);
                    let text = match cell {
                        None => "".to_string(),
                        Some(c) => match &c.metrics {
                            Some(m) => format!("{:.1} W {}", m.avg_power_w, m.gate.mark()),
                            None => "failed".to_string(),
                        },
                    };
                    let _ = write!(s, " {text} |");
                }
                s.push('\n');
            }
        }
        let _ = write!(
            s,
            "\n{} of {} cells completed ({} resumed), {} failed.\n",
            self.completed,
            self.cells.len(),
            self.resumed,
            self.failed
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_32_cells() {
        let grid = SweepGrid::default();
        let cells = grid.cells();
        assert_eq!(cells.len(), 32);
        let mut ids: Vec<String> = cells.iter().map(|c| c.id()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 32);
        let loco = SweepGrid { tasks: vec![TaskKind::Locomotion], ..Default::default() };
        assert_eq!(loco.cells().len(), 16);
        assert!(SweepGrid { gravities: vec![], ..Default::default() }.validate().is_err());
        assert!(SweepGrid { gravities: vec![0.0], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn cell_configs_differ_by_axis() {
        let base = RunConfig::default();
        let cells = SweepGrid::default().cells();
        let hashes: std::collections::HashSet<String> = cells.iter().map(|c| c.apply(&base).hash()).collect();
        assert_eq!(hashes.len(), 32);
        let c = cells[5].apply(&base);
        assert_eq!(c.env.gravity, cells[5].gravity);
        assert_eq!(c.env.gravity_scaling, cells[5].gravity_scaling);
    }

    #[test]
    fn tiny_sweep_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.env = crate::env::EnvConfig::flat(TaskKind::Locomotion, 9.81);
        cfg.train.n_envs = 2;
        cfg.train.horizon = 4;
        cfg.train.epochs = 1;
        cfg.train.minibatches = 1;
        cfg.train.policy.actor_hidden = vec![8];
        cfg.train.policy.critic_hidden = vec![8];
        cfg.eval.duration_s = 0.5;
        cfg.sweep = SweepGrid {
            gravities: vec![1.62, 9.81],
            rewards: vec![Regularization::PowerOptimized],
            scaling: vec![true],
            tasks: vec![TaskKind::Locomotion, TaskKind::BasePose],
            iterations: Some(1),
        };
        let first = run_sweep(&cfg, dir.path(), &SweepOptions::default(), &|_| {}).unwrap();
        assert_eq!((first.completed, first.resumed, first.failed), (4, 0, 0));
        let md = std::fs::read_to_string(dir.path().join(REPORT_MARKDOWN)).unwrap();
        assert!(md.contains("## base-pose") && md.contains("| 1.62 |"));
        let again = run_sweep(&cfg, dir.path(), &SweepOptions { workers: 2 }, &|_| {}).unwrap();
        assert_eq!((again.completed, again.resumed), (4, 4));
        for (a, b) in first.cells.iter().zip(&again.cells) {
            assert_eq!(a.metrics, b.metrics);
        }
        let back: SweepReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_JSON)).unwrap()).unwrap();
        assert_eq!(back, again);
    }
}
