use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::record::LogRecord;
use crate::error::{Error, Result};
use crate::hybrid::PlacementStage;

/// Speeds below this count as a stopped robot.
pub const ZERO_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_err_x: f64,
    pub final_err_y: f64,
    pub mse_x: f64,
    pub mse_y: f64,
    /// Ticks with `|nu_cmd| < 1e-9` outside `Done`, counted from the first
    /// tick with a detection.
    pub zero_velocity_ticks: usize,
    pub converged: bool,
    /// Wall-clock mean per control tick (ms); 0 when computed from a log.
    pub iteration_time_mean: f64,
    pub ticks: usize,
}

impl RunMetrics {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Final errors from the last row's true pose, MSE over the last 10 % of
/// rows (at least one row).
pub fn compute_metrics(log: &[LogRecord], target: &Vector2<f64>) -> Result<RunMetrics> {
    let last = log.last().ok_or(Error::EmptyLog)?;
    let window = (log.len() / 10).max(1);
    let tail = &log[log.len() - window..];
    let mse = |f: &dyn Fn(&LogRecord) -> f64| {
        tail.iter().map(|r| f(r).powi(2)).sum::<f64>() / window as f64
    };
    let done = PlacementStage::Done.id();
    let first_detection = log.iter().position(|r| r.c).unwrap_or(log.len());
    let zero_velocity_ticks = log[first_detection..]
        .iter()
        .filter(|r| r.state_id != done && r.nu_cmd.abs() < ZERO_SPEED)
        .count();
    Ok(RunMetrics {
        final_err_x: last.x_true - target.x,
        final_err_y: last.y_true - target.y,
        mse_x: mse(&|r| r.x_true - target.x),
        mse_y: mse(&|r| r.y_true - target.y),
        zero_velocity_ticks,
        converged: last.state_id == done,
        iteration_time_mean: 0.0,
        ticks: log.len(),
    })
}
