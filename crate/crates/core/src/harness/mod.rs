//! Closed-loop scenario runner on an analytic world: synthetic sensors,
//! odometry, the three controller modes, logging and metrics.

pub mod config;
pub mod iteration;
pub mod metrics;
pub mod record;
pub mod runner;
pub mod sensors;
pub mod world;

pub use config::{Mode, Mount, ScenarioConfig};
pub use iteration::{IterationFixture, IterationOutput};
pub use metrics::{compute_metrics, RunMetrics};
pub use record::{read_log_csv, write_log_csv, ControllerUsed, DetectionTrace, LogRecord};
pub use runner::{ground_truth_target, run_scenario, simulate, RunOutput};
