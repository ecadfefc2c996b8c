//! Procedural heightfield tiles.
//!
//! A generated field is a single square tile that repeats periodically in x
//! and y, so a robot never walks off the map. Every generator below produces
//! data that is continuous across the tile seam.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_RESOLUTION: f64 = 0.05;
pub const TILE_SIZE: f64 = 4.0;
pub const MAX_SLOPE_DEG: f64 = 23.0;
pub const MAX_BOX_HEIGHT: f64 = 0.1;
pub const MAX_NOISE_AMPLITUDE: f64 = 0.1;
/// Edge length of a random box.
pub const BOX_SIZE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Flat,
    Slope,
    Boxes,
    Noise,
}

impl TerrainKind {
    /// Kinds used for the rough-terrain training mix.
    pub const ROUGH: [TerrainKind; 3] = [TerrainKind::Slope, TerrainKind::Boxes, TerrainKind::Noise];

    pub fn as_str(&self) -> &'static str {
        match self {
            TerrainKind::Flat => "flat",
            TerrainKind::Slope => "slope",
            TerrainKind::Boxes => "boxes",
            TerrainKind::Noise => "noise",
        }
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerrainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(TerrainKind::Flat),
            "slope" | "slopes" => Ok(TerrainKind::Slope),
            "boxes" | "box" => Ok(TerrainKind::Boxes),
            "noise" => Ok(TerrainKind::Noise),
            other => Err(Error::Config(format!("unknown terrain kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    /// Grid points per side; the tile has `n × n` distinct samples.
    pub n: usize,
    pub resolution: f64,
    /// World position of grid point (0, 0).
    pub origin: [f64; 2],
    /// Row-major, `heights[iy * n + ix]`.
    pub heights: Vec<f64>,
    pub kind: TerrainKind,
    pub difficulty: f64,
    /// Discrete difficulty label of the tile.
    pub level: usize,
}

impl HeightField {
    pub fn flat() -> Self {
        let n = (TILE_SIZE / GRID_RESOLUTION).round() as usize;
        HeightField {
            n,
            resolution: GRID_RESOLUTION,
            origin: [-0.5 * TILE_SIZE, -0.5 * TILE_SIZE],
            heights: vec![0.0; n * n],
            kind: TerrainKind::Flat,
            difficulty: 0.0,
            level: 0,
        }
    }

    pub fn size(&self) -> f64 {
        self.n as f64 * self.resolution
    }

    pub fn grid(&self, ix: usize, iy: usize) -> f64 {
        self.heights[(iy % self.n) * self.n + ix % self.n]
    }

    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let u = (x - self.origin[0]) / self.resolution;
        let v = (y - self.origin[1]) / self.resolution;
        let n = self.n as f64;
        let u = u.rem_euclid(n);
        let v = v.rem_euclid(n);
        let (iu, iv) = (u.floor(), v.floor());
        ((iu as usize) % self.n, (iv as usize) % self.n, u - iu, v - iv)
    }

    /// Bilinearly interpolated height.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (ix, iy, fx, fy) = self.locate(x, y);
        let h00 = self.grid(ix, iy);
        let h10 = self.grid(ix + 1, iy);
        let h01 = self.grid(ix, iy + 1);
        let h11 = self.grid(ix + 1, iy + 1);
        h00 * (1.0 - fx) * (1.0 - fy) + h10 * fx * (1.0 - fy) + h01 * (1.0 - fx) * fy + h11 * fx * fy
    }

    /// Height gradient `(∂h/∂x, ∂h/∂y)` of the bilinear surface.
    pub fn gradient_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (ix, iy, fx, fy) = self.locate(x, y);
        let h00 = self.grid(ix, iy);
        let h10 = self.grid(ix + 1, iy);
        let h01 = self.grid(ix, iy + 1);
        let h11 = self.grid(ix + 1, iy + 1);
        let dx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.resolution;
        let dy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.resolution;
        (dx, dy)
    }

    pub fn normal_at(&self, x: f64, y: f64) -> Vector3<f64> {
        let (dx, dy) = self.gradient_at(x, y);
        Vector3::new(-dx, -dy, 1.0).normalize()
    }

    /// Largest axis-aligned slope between neighbouring grid samples.
    pub fn max_grid_slope(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for iy in 0..self.n {
            for ix in 0..self.n {
                let h = self.grid(ix, iy);
                worst = worst.max((self.grid(ix + 1, iy) - h).abs() / self.resolution);
                worst = worst.max((self.grid(ix, iy + 1) - h).abs() / self.resolution);
            }
        }
        worst
    }

    pub fn height_range(&self) -> (f64, f64) {
        self.heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)))
    }

    /// Writes the grid as CSV: one row per y sample, one column per x sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# heightfield kind={} difficulty={} resolution={} origin_x={} origin_y={}",
            self.kind, self.difficulty, self.resolution, self.origin[0], self.origin[1]
        )?;
        for iy in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|ix| format!("{}", self.grid(ix, iy))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn terrain_seed(kind: TerrainKind, seed: u64) -> u64 {
    let tag = match kind {
        TerrainKind::Flat => 0x0f1a,
        TerrainKind::Slope => 0x5107,
        TerrainKind::Boxes => 0xb0c5,
        TerrainKind::Noise => 0x4015,
    };
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ tag
}

/// Generates one periodic terrain tile.
///
/// Slopes are a ridge running along y whose flanks rise at `difficulty × 23°`;
/// boxes are 0.4 m blocks up to `difficulty × 0.1` m tall; noise is uniform in
/// `±difficulty × 0.1` m per grid sample.
pub fn generate_terrain(kind: TerrainKind, difficulty: f64, seed: u64) -> Result<HeightField> {
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Config(format!("terrain difficulty must lie in [0, 1], got {difficulty}")));
    }
    let mut field = HeightField::flat();
    field.kind = kind;
    field.difficulty = difficulty;
    let n = field.n;
    let res = field.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(terrain_seed(kind, seed));
    match kind {
        TerrainKind::Flat => {}
        TerrainKind::Slope => {
            let grade = (difficulty * MAX_SLOPE_DEG).to_radians().tan();
            let half = n / 2;
            for iy in 0..n {
                for ix in 0..n {
                    let from_edge = ix.min(n - ix) as f64;
                    debug_assert!(from_edge <= half as f64);
                    field.heights[iy * n + ix] = grade * from_edge * res;
                }
            }
        }
        TerrainKind::Boxes => {
            let cells = (BOX_SIZE / res).round() as usize;
            let blocks = n.div_ceil(cells);
            let top = difficulty * MAX_BOX_HEIGHT;
            let tops: Vec<f64> = (0..blocks * blocks).map(|_| rng.gen_range(0.0..=1.0) * top).collect();
            for iy in 0..n {
                for ix in 0..n {
                    field.heights[iy * n + ix] = tops[(iy / cells) * blocks + ix / cells];
                }
            }
        }
        TerrainKind::Noise => {
            let amp = difficulty * MAX_NOISE_AMPLITUDE;
            for h in field.heights.iter_mut() {
                *h = rng.gen_range(-1.0..=1.0) * amp;
            }
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_zero() {
        for seed in [0, 1, 99] {
            let f = generate_terrain(TerrainKind::Flat, 0.7, seed).unwrap();
            assert!(f.heights.iter().all(|&h| h == 0.0));
            assert_eq!(f.height_at(12.3, -7.7), 0.0);
        }
    }

    #[test]
    fn full_slope_grade() {
        let f = generate_terrain(TerrainKind::Slope, 1.0, 3).unwrap();
        let expected = 23f64.to_radians().tan();
        assert!((f.max_grid_slope() - expected).abs() < 1e-9);
        let (dx, dy) = f.gradient_at(-1.0, 0.3);
        assert!(((dx * dx + dy * dy).sqrt() - expected).abs() < 1e-9);
        let half = generate_terrain(TerrainKind::Slope, 0.5, 3).unwrap();
        assert!((half.max_grid_slope() - 11.5f64.to_radians().tan()).abs() < 1e-9);
    }

    #[test]
    fn noise_within_amplitude() {
        let f = generate_terrain(TerrainKind::Noise, 0.5, 11).unwrap();
        let (lo, hi) = f.height_range();
        assert!(lo >= -0.05 && hi <= 0.05, "{lo} {hi}");
        assert!(hi - lo > 0.05, "noise should use most of its range");
    }

    #[test]
    fn boxes_within_height() {
        let f = generate_terrain(TerrainKind::Boxes, 0.3, 5).unwrap();
        let (lo, hi) = f.height_range();
        assert!(lo >= 0.0 && hi <= 0.03 + 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in TerrainKind::ROUGH {
            let a = generate_terrain(kind, 0.8, 42).unwrap();
            let b = generate_terrain(kind, 0.8, 42).unwrap();
            assert_eq!(a.heights, b.heights);
            if kind != TerrainKind::Slope {
                let c = generate_terrain(kind, 0.8, 43).unwrap();
                assert_ne!(a.heights, c.heights);
            }
        }
    }

    #[test]
    fn continuous_across_tile_seam() {
        let f = generate_terrain(TerrainKind::Noise, 1.0, 8).unwrap();
        let edge = f.origin[0] + f.size();
        let eps = 1e-9;
        let a = f.height_at(edge - eps, 0.37);
        let b = f.height_at(edge + eps, 0.37);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(generate_terrain(TerrainKind::Noise, 1.5, 0).is_err());
        assert!("lava".parse::<TerrainKind>().is_err());
        assert_eq!("boxes".parse::<TerrainKind>().unwrap(), TerrainKind::Boxes);
    }

    #[test]
    fn csv_export_shape() {
        let f = generate_terrain(TerrainKind::Boxes, 1.0, 1).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), f.n);
        assert_eq!(rows[0].split(',').count(), f.n);
    }
}
