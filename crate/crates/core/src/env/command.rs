//! Command sampling and the fixed evaluation protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{Command, TaskKind};

/// Uniform sampling ranges, `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandRanges {
    pub vx: [f64; 2],
    pub vy: [f64; 2],
    pub yaw_rate: [f64; 2],
    pub height: [f64; 2],
    pub pitch: [f64; 2],
    pub pose_yaw_rate: [f64; 2],
}

impl Default for CommandRanges {
    fn default() -> Self {
        CommandRanges {
            vx: [-0.7, 0.7],
            vy: [-0.7, 0.7],
            yaw_rate: [-0.7, 0.7],
            height: [0.2, 0.45],
            pitch: [-0.5, 0.5],
            pose_yaw_rate: [-0.5, 0.5],
        }
    }
}

impl CommandRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("vx", self.vx),
            ("vy", self.vy),
            ("yaw_rate", self.yaw_rate),
            ("height", self.height),
            ("pitch", self.pitch),
            ("pose_yaw_rate", self.pose_yaw_rate),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Config(format!("command range {name} = {r:?} is not an interval")));
            }
        }
        if !(self.height[0] > 0.0 && self.height[1] < 0.5) {
            return Err(Error::Config(format!(
                "base height range {:?} must lie within the leg reach (0, 0.5) m",
                self.height
            )));
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

pub fn sample_command<R: Rng>(task: TaskKind, ranges: &CommandRanges, rng: &mut R) -> Command {
    match task {
        TaskKind::Locomotion => Command::Locomotion {
            vx: uniform(rng, ranges.vx),
            vy: uniform(rng, ranges.vy),
            yaw_rate: uniform(rng, ranges.yaw_rate),
        },
        TaskKind::BasePose => Command::BasePose {
            height: uniform(rng, ranges.height),
            pitch: uniform(rng, ranges.pitch),
            yaw_rate: uniform(rng, ranges.pose_yaw_rate),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalProtocol {
    /// Walk forward at 0.4 m/s on flat ground.
    #[serde(rename = "loco-0.4")]
    Loco04,
    /// Hold 0.32 m height with level pitch, then pitch 0.5 rad, then yaw at 0.5 rad/s.
    #[serde(rename = "base-pose-seq")]
    BasePoseSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPhase {
    pub name: String,
    pub start_s: f64,
    pub end_s: f64,
    pub command: Command,
}

pub const EVAL_DURATION_S: f64 = 60.0;

impl EvalProtocol {
    pub fn task(&self) -> TaskKind {
        match self {
            EvalProtocol::Loco04 => TaskKind::Locomotion,
            EvalProtocol::BasePoseSeq => TaskKind::BasePose,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalProtocol::Loco04 => "loco-0.4",
            EvalProtocol::BasePoseSeq => "base-pose-seq",
        }
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Locomotion => EvalProtocol::Loco04,
            TaskKind::BasePose => EvalProtocol::BasePoseSeq,
        }
    }

    /// Phases spanning `duration` seconds.
    pub fn phases(&self, duration: f64) -> Vec<ProtocolPhase> {
        match self {
            EvalProtocol::Loco04 => vec![ProtocolPhase {
                name: "walk".into(),
                start_s: 0.0,
                end_s: duration,
                command: Command::Locomotion {
                    vx: 0.4,
                    vy: 0.0,
                    yaw_rate: 0.0,
                },
            }],
            EvalProtocol::BasePoseSeq => {
                let third = duration / 3.0;
                let pose = |pitch, yaw_rate| Command::BasePose {
                    height: 0.32,
                    pitch,
                    yaw_rate,
                };
                vec![
                    ProtocolPhase {
                        name: "level".into(),
                        start_s: 0.0,
                        end_s: third,
                        command: pose(0.0, 0.0),
                    },
                    ProtocolPhase {
                        name: "pitch".into(),
                        start_s: third,
                        end_s: 2.0 * third,
                        command: pose(0.5, 0.0),
                    },
                    ProtocolPhase {
                        name: "yaw".into(),
                        start_s: 2.0 * third,
                        end_s: duration,
                        command: pose(0.0, 0.5),
                    },
                ]
            }
        }
    }

    pub fn command_at(&self, t: f64, duration: f64) -> Command {
        let phases = self.phases(duration);
        phases
            .iter()
            .find(|p| t < p.end_s)
            .unwrap_or_else(|| phases.last().expect("protocols have phases"))
            .command
    }
}

impl std::fmt::Display for EvalProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EvalProtocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loco-0.4" | "loco" => Ok(EvalProtocol::Loco04),
            "base-pose-seq" | "pose" => Ok(EvalProtocol::BasePoseSeq),
            other => Err(Error::Config(format!(
                "unknown protocol '{other}' (expected loco-0.4 or base-pose-seq)"
            ))),
        }
    }
}
