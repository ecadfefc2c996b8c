//! Modeled power of a recorded trajectory.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actuation::{trajectory_power, ActuatorParams, TrajectoryLog};
use crate::error::{Error, Result};

pub const POWER_REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub format_version: u32,
    pub source: String,
    pub samples: usize,
    pub duration_s: f64,
    pub average_power_w: f64,
    pub energy_j: f64,
    pub joint_average_w: f64,
    pub winding_average_w: f64,
    pub joint_energy_j: f64,
    pub winding_energy_j: f64,
    /// Constant draw removed from the average, W.
    pub standby_w: Option<f64>,
    /// `average_power_w − standby_w`.
    pub net_average_w: Option<f64>,
}

/// Reads a trajectory CSV and integrates the drivetrain loss model over it.
pub fn power_report(path: &Path, params: &ActuatorParams, subtract_standby: Option<f64>) -> Result<PowerReport> {
    params.validate()?;
    if let Some(s) = subtract_standby {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config(format!("standby power must be non-negative, got {s}")));
        }
    }
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open trajectory log {}: {e}", path.display())))?;
    let log = TrajectoryLog::read_csv(file)?;
    let p = trajectory_power(&log, params)?;
    Ok(PowerReport {
        format_version: POWER_REPORT_FORMAT_VERSION,
        source: path.display().to_string(),
        samples: log.samples.len(),
        duration_s: p.duration_s,
        average_power_w: p.average_power_w,
        energy_j: p.energy_j,
        joint_average_w: p.joint_average_w,
        winding_average_w: p.winding_average_w,
        joint_energy_j: p.joint_energy_j,
        winding_energy_j: p.winding_energy_j,
        standby_w: subtract_standby,
        net_average_w: subtract_standby.map(|s| p.average_power_w - s),
    })
}

impl PowerReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "trajectory     {}\nsamples        {}\nduration       {:.3} s\naverage power  {:.3} W\n  joint        {:.3} W\n  winding      {:.3} W\nenergy         {:.3} J\n",
            self.source,
            self.samples,
            self.duration_s,
            self.average_power_w,
            self.joint_average_w,
            self.winding_average_w,
            self.energy_j
        );
        if let (Some(standby), Some(net)) = (self.standby_w, self.net_average_w) {
            s.push_str(&format!("standby        {standby:.3} W\nnet average    {net:.3} W\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::{LogSample, TrajectoryLog};
    use approx::assert_relative_eq;

    /// Pure winding loss of a constant torque on joint 0 at standstill.
    fn constant_log(tau: f64, n: usize) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(100.0);
        for i in 0..n {
            let mut t = vec![0.0; 12];
            t[0] = tau;
            log.samples.push(LogSample::actuation(i as f64 / 100.0, t, vec![0.0; 12]));
        }
        log
    }

    #[test]
    fn constant_power_and_standby() {
        let params = ActuatorParams::default();
        // Choose the torque whose winding loss is exactly 100 W.
        let per_nm2 = crate::actuation::winding_loss(1.0, &params);
        let tau = (100.0 / per_nm2).sqrt();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        constant_log(tau, 51).write_csv(File::create(&path).unwrap()).unwrap();
        let r = power_report(&path, &params, Some(77.0)).unwrap();
        assert_relative_eq!(r.average_power_w, 100.0, max_relative = 1e-9);
        assert_relative_eq!(r.net_average_w.unwrap(), 23.0, max_relative = 1e-9);
        assert_relative_eq!(r.energy_j, 50.0, max_relative = 1e-9);
        assert_eq!(r.joint_average_w, 0.0);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<PowerReport>(&json).unwrap(), r);
        assert!(r.to_text().contains("net average"));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# gravsim-trajectory format_version=1 rate_hz=100\nt,q0\n0,0\n").unwrap();
        let err = power_report(&path, &ActuatorParams::default(), None).unwrap_err();
        assert!(err.to_string().contains("'q1'"), "{err}");
        assert!(matches!(err, Error::Log(_)));
    }
}
