//! Terrain difficulty curriculum.

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainConfig {
    /// Terrain kinds mixed in equal proportion across environments.
    pub kinds: Vec<TerrainKind>,
    pub levels: usize,
    pub curriculum: bool,
    /// Highest level a fresh environment may start on.
    pub max_initial_level: usize,
    pub promote_fraction: f64,
    pub demote_fraction: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            kinds: TerrainKind::ROUGH.to_vec(),
            levels: 10,
            curriculum: true,
            max_initial_level: 0,
            promote_fraction: 0.75,
            demote_fraction: 0.25,
        }
    }
}

impl TerrainConfig {
    pub fn flat() -> Self {
        TerrainConfig {
            kinds: vec![TerrainKind::Flat],
            levels: 1,
            curriculum: false,
            ..Default::default()
        }
    }

    /// Difficulty in [0, 1] of a level.
    pub fn difficulty(&self, level: usize) -> f64 {
        if self.levels <= 1 {
            0.0
        } else {
            level.min(self.levels - 1) as f64 / (self.levels - 1) as f64
        }
    }
}

/// One level up when the robot covered at least `promote` of the commanded
/// distance, one down below `demote`, otherwise unchanged. Episodes that
/// commanded (almost) no travel leave the level alone.
pub fn terrain_curriculum_update(
    level: usize,
    levels: usize,
    traversed: f64,
    commanded: f64,
    config: &TerrainConfig,
) -> usize {
    let top = levels.saturating_sub(1);
    if commanded < 1e-3 {
        return level.min(top);
    }
    let ratio = traversed / commanded;
    let next = if ratio >= config.promote_fraction {
        level + 1
    } else if ratio < config.demote_fraction {
        level.saturating_sub(1)
    } else {
        level
    };
    next.min(top)
}
