//! Run manifests: one `manifest.json` per output directory.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    /// Subcommand that produced the directory.
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    /// Paths relative to the directory holding the manifest.
    pub artifacts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, config_hash: String, seed: u64) -> Self {
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.to_string(),
            config_hash,
            seed,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            artifacts: Vec::new(),
            error: None,
        }
    }

    pub fn finish(&mut self, error: Option<&Error>) {
        self.finished_at = Some(now());
        match error {
            None => self.status = RunStatus::Completed,
            Some(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
    }

    /// Records an artifact under `dir`, stored relative to it.
    pub fn add_artifact(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path).to_path_buf();
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let tmp = dir.join(".manifest.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "manifest format version {} is not supported (expected {MANIFEST_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    /// A completed run of the same configuration whose artifacts still exist.
    pub fn is_complete_for(&self, dir: &Path, config_hash: &str) -> bool {
        self.status == RunStatus::Completed
            && self.config_hash == config_hash
            && self.artifacts.iter().all(|a| dir.join(a).exists())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_completion() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("train", "abc".into(), 7);
        std::fs::write(dir.path().join("metrics.jsonl"), "").unwrap();
        m.add_artifact(dir.path(), &dir.path().join("metrics.jsonl"));
        m.add_artifact(dir.path(), &dir.path().join("metrics.jsonl"));
        assert_eq!(m.artifacts, vec![PathBuf::from("metrics.jsonl")]);
        m.write(dir.path()).unwrap();
        assert!(!RunManifest::read(dir.path()).unwrap().is_complete_for(dir.path(), "abc"));
        m.finish(None);
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.is_complete_for(dir.path(), "abc"));
        assert!(!back.is_complete_for(dir.path(), "abd"));
        std::fs::remove_file(dir.path().join("metrics.jsonl")).unwrap();
        assert!(!back.is_complete_for(dir.path(), "abc"));
        assert!(chrono::DateTime::parse_from_rfc3339(&back.started_at).is_ok());
    }

    #[test]
    fn failure_is_recorded() {
        let mut m = RunManifest::start("eval", "h".into(), 0);
        m.finish(Some(&Error::Training("diverged".into())));
        assert_eq!(m.status, RunStatus::Failed);
        assert!(m.error.unwrap().contains("diverged"));
    }
}
