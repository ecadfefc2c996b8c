//! Run configuration files: TOML with `include` support.
//!
//! A file may list other files under a top-level `include` key. Included
//! files are loaded first, in order, and the including file's tables are
//! merged on top key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sweep::SweepGrid;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { duration_s: crate::env::EVAL_DURATION_S, seed: 0 }
    }
}

/// Everything a run needs: robot, motors, environment and rewards (under
/// `env`), training, evaluation and the sweep grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepGrid,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if !(self.eval.duration_s > 0.0 && self.eval.duration_s.is_finite()) {
            return Err(Error::Config(format!("eval.duration_s must be positive, got {}", self.eval.duration_s)));
        }
        self.sweep.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        from_value(value)
    }

    /// Loads a file and everything it includes.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut stack = Vec::new();
        let value = load_value(path, &mut stack)?;
        from_value(value)
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configurations serialize");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn from_value(value: toml::Value) -> Result<RunConfig> {
    let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_value(path: &Path, stack: &mut Vec<PathBuf>) -> Result<toml::Value> {
    let canonical = path
        .canonicalize()
        .map_err(|e| Error::Config(format!("cannot open config {}: {e}", path.display())))?;
    if stack.contains(&canonical) {
        return Err(Error::Config(format!("include cycle through {}", path.display())));
    }
    let text = std::fs::read_to_string(&canonical)?;
    let mut value: toml::Value =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let includes = match value.as_table_mut().and_then(|t| t.remove("include")) {
        None => Vec::new(),
        Some(toml::Value::String(s)) => vec![s],
        Some(toml::Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(Error::Config(format!("include entries must be paths, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::Config(format!("include must be a path or list, got {other}"))),
    };
    stack.push(canonical.clone());
    let dir = canonical.parent().unwrap_or(Path::new("."));
    let mut merged = toml::Value::Table(Default::default());
    for inc in includes {
        let base = load_value(&dir.join(inc), stack)?;
        merge(&mut merged, base);
    }
    stack.pop();
    merge(&mut merged, value);
    Ok(merged)
}

/// Deep-merges tables; any other value in `top` replaces the one below.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{Regularization, TaskKind};

    #[test]
    fn includes_merge_in_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("robot.toml"),
            "[env]\ngravity = 3.73\ntask = \"base-pose\"\n[env.actuator]\nkp = 35.0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("train.toml"), "[train]\nn_envs = 8\nhorizon = 16\n").unwrap();
        std::fs::write(
            dir.path().join("run.toml"),
            "include = [\"robot.toml\", \"train.toml\"]\n[env]\ngravity = 1.62\n[train]\nhorizon = 12\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        assert_eq!(cfg.env.gravity, 1.62);
        assert_eq!(cfg.env.task, TaskKind::BasePose);
        assert_eq!(cfg.env.actuator.kp, 35.0);
        assert_eq!(cfg.env.regularization, Regularization::Baseline);
        assert_eq!((cfg.train.n_envs, cfg.train.horizon), (8, 12));
    }

    #[test]
    fn cycles_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "include = \"b.toml\"\n").unwrap();
        std::fs::write(dir.path().join("b.toml"), "include = \"a.toml\"\n").unwrap();
        assert!(matches!(RunConfig::load(&dir.path().join("a.toml")), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[env]\ngravity = -1.0\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[train]\nbogus = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let text = toml::to_string(&a).unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), a);
    }
}
