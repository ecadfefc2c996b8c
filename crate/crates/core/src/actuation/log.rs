//! Trajectory log CSV.
//!
//! ```text
//! # gravsim-trajectory format_version=1 rate_hz=200
//! t,q0..q11,dq0..dq11,tau0..tau11,base_px,base_py,base_pz,base_qx,base_qy,base_qz,base_qw,
//!   base_vx,base_vy,base_vz,base_wx,base_wy,base_wz,contact0..contact3
//! ```
//!
//! SI units throughout; the base quaternion is scalar-last and the base twist
//! is world-frame linear then angular velocity.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
const JOINTS: usize = 12;
const FEET: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct LogSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub tau: Vec<f64>,
    /// Position then scalar-last quaternion.
    pub base_pose: [f64; 7],
    pub base_twist: [f64; 6],
    pub contacts: [bool; 4],
}

impl LogSample {
    /// A sample carrying only actuation data.
    pub fn actuation(t: f64, tau: Vec<f64>, dq: Vec<f64>) -> Self {
        LogSample {
            t,
            q: vec![0.0; tau.len()],
            dq,
            tau,
            base_pose: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            base_twist: [0.0; 6],
            contacts: [false; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rate_hz: f64,
    pub samples: Vec<LogSample>,
}

pub fn column_names() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "dq", "tau"] {
        cols.extend((0..JOINTS).map(|i| format!("{prefix}{i}")));
    }
    for name in ["px", "py", "pz", "qx", "qy", "qz", "qw", "vx", "vy", "vz", "wx", "wy", "wz"] {
        cols.push(format!("base_{name}"));
    }
    cols.extend((0..FEET).map(|i| format!("contact{i}")));
    cols
}

impl TrajectoryLog {
    pub fn new(rate_hz: f64) -> Self {
        TrajectoryLog {
            rate_hz,
            samples: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Requires at least two samples spaced `1/rate_hz` apart (0.1 % slack).
    pub fn check_uniform(&self) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Log(format!("invalid sampling rate {}", self.rate_hz)));
        }
        if self.samples.len() < 2 {
            return Err(Error::Log(format!(
                "need at least two samples, found {}",
                self.samples.len()
            )));
        }
        let dt = 1.0 / self.rate_hz;
        for (i, w) in self.samples.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-3 * dt + 1e-9 {
                return Err(Error::Log(format!(
                    "non-uniform timestamps at sample {}: step {step} s, expected {dt} s",
                    i + 1
                )));
            }
        }
        for s in &self.samples {
            if s.tau.len() != s.dq.len() {
                return Err(Error::Log(format!("sample at t={} has mismatched tau/dq lengths", s.t)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(
            out,
            "# gravsim-trajectory format_version={} rate_hz={}",
            TRAJECTORY_FORMAT_VERSION, self.rate_hz
        )?;
        writeln!(out, "{}", column_names().join(","))?;
        for s in &self.samples {
            let mut fields: Vec<String> = Vec::with_capacity(68);
            fields.push(s.t.to_string());
            for v in s.q.iter().chain(&s.dq).chain(&s.tau) {
                fields.push(v.to_string());
            }
            for v in s.base_pose.iter().chain(&s.base_twist) {
                fields.push(v.to_string());
            }
            for c in s.contacts {
                fields.push(if c { "1" } else { "0" }.to_string());
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let rate_hz = parse_header(&first)?;
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = csv
            .headers()
            .map_err(|e| Error::Log(format!("line 2: {e}")))?
            .clone();
        let mut index = Vec::new();
        for name in column_names() {
            let pos = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Log(format!("missing column '{name}'")))?;
            index.push(pos);
        }
        let mut samples = Vec::new();
        for (row, record) in csv.records().enumerate() {
            let line = row + 3;
            let record = record.map_err(|e| Error::Log(format!("line {line}: {e}")))?;
            let mut vals = Vec::with_capacity(index.len());
            for (&pos, name) in index.iter().zip(column_names()) {
                let text = record
                    .get(pos)
                    .ok_or_else(|| Error::Log(format!("line {line}: missing value for '{name}'")))?;
                let v: f64 = text
                    .trim()
                    .parse()
                    .map_err(|_| Error::Log(format!("line {line}: column '{name}' is not a number: '{text}'")))?;
                vals.push(v);
            }
            let take = |start: usize, len: usize| vals[start..start + len].to_vec();
            let mut base_pose = [0.0; 7];
            base_pose.copy_from_slice(&vals[37..44]);
            let mut base_twist = [0.0; 6];
            base_twist.copy_from_slice(&vals[44..50]);
            let mut contacts = [false; 4];
            for (i, c) in contacts.iter_mut().enumerate() {
                *c = vals[50 + i] != 0.0;
            }
            samples.push(LogSample {
                t: vals[0],
                q: take(1, JOINTS),
                dq: take(1 + JOINTS, JOINTS),
                tau: take(1 + 2 * JOINTS, JOINTS),
                base_pose,
                base_twist,
                contacts,
            });
        }
        Ok(TrajectoryLog { rate_hz, samples })
    }
}

fn parse_header(line: &str) -> Result<f64> {
    let line = line.trim();
    if !line.starts_with('#') {
        return Err(Error::Log("line 1: expected a '# gravsim-trajectory ... rate_hz=<Hz>' header comment".into()));
    }
    let mut rate = None;
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = token.strip_prefix("rate_hz=") {
            rate = Some(
                v.parse::<f64>()
                    .map_err(|_| Error::Log(format!("line 1: bad rate_hz '{v}'")))?,
            );
        }
        if let Some(v) = token.strip_prefix("format_version=") {
            let version: u32 = v
                .parse()
                .map_err(|_| Error::Log(format!("line 1: bad format_version '{v}'")))?;
            if version != TRAJECTORY_FORMAT_VERSION {
                return Err(Error::Log(format!("line 1: unsupported format_version {version}")));
            }
        }
    }
    rate.ok_or_else(|| Error::Log("line 1: header comment lacks rate_hz".into()))
}

#[cfg(test)]
mod tests {
    use super::super::{trajectory_power, ActuatorParams};
    use super::*;

    /// Constant 10 W of positive mechanical power and no winding loss.
    fn constant_log(seconds: f64, rate: f64) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(rate);
        let n = (seconds * rate).round() as usize;
        for i in 0..=n {
            let mut tau = vec![0.0; 12];
            let mut dq = vec![0.0; 12];
            tau[0] = 1e-9;
            dq[0] = 1e10;
            log.samples.push(LogSample::actuation(i as f64 / rate, tau, dq));
        }
        log
    }

    #[test]
    fn constant_power() {
        let log = constant_log(5.0, 50.0);
        let params = ActuatorParams {
            winding_resistance: 1e-300,
            ..Default::default()
        };
        let p = trajectory_power(&log, &params).unwrap();
        assert!((p.average_power_w - 10.0).abs() < 1e-9);
        assert!((p.energy_j - 50.0).abs() < 1e-8);
    }

    #[test]
    fn empty_and_irregular_logs_fail() {
        let params = ActuatorParams::default();
        assert!(trajectory_power(&TrajectoryLog::new(50.0), &params).is_err());
        let mut log = constant_log(1.0, 50.0);
        log.samples[10].t += 0.005;
        let err = trajectory_power(&log, &params).unwrap_err();
        assert!(err.to_string().contains("non-uniform"));
    }

    #[test]
    fn csv_round_trip_and_missing_column() {
        let mut log = constant_log(0.1, 200.0);
        log.samples[3].contacts = [true, false, true, false];
        log.samples[3].base_pose = [0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 1.0];
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let back = TrajectoryLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, log);

        let text = String::from_utf8(buf).unwrap().replacen("tau3,", "torque3,", 1);
        let err = TrajectoryLog::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("tau3"), "{err}");
    }

    #[test]
    fn bad_value_names_line() {
        let log = constant_log(0.05, 200.0);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
        lines[4] = lines[4].replacen(",0,", ",abc,", 1);
        let err = TrajectoryLog::read_csv(lines.join("\n").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }
}
