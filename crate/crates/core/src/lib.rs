//! Hybrid visual-servoing / kinematic position control for car-like robots.
//!
//! The crate bundles the building blocks (rigid geometry, bicycle kinematics,
//! pinhole camera model, LiDAR/camera depth fusion, bounding-box perception)
//! with the two controllers, the switching law and placement state machine,
//! and a deterministic closed-loop simulator in [`harness`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod hybrid;
pub mod kinematic_ctrl;
pub mod linalg;
pub mod perception;
pub mod vehicle;
pub mod visual_servo;

pub use camera::{CameraIntrinsics, PixelPoint};
pub use error::{Error, Result};
pub use fusion::{BlindSpotMask, BlindSpotParams, DepthImage, PointCloud, RangeImage};
pub use geometry::{velocity_adjoint, RigidTransform, Twist6, VelocityAdjoint};
pub use harness::{Mode, RunMetrics, ScenarioConfig};
pub use hybrid::{PlacementStage, SwitchThresholds, TargetMemory, TargetPoint, TaskKind};
pub use kinematic_ctrl::KinematicGains;
pub use perception::{BoundingBox, Detection, ObjectEstimate, SyntheticDetector};
pub use vehicle::{Twist2, VehicleCommand, VehicleParams, VehicleState};
pub use visual_servo::{DesiredPlacement, FeatureSet, RobotJacobianMode, ServoGains};
