use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::fusion::BlindSpotParams;
use crate::geometry::RigidTransform;
use crate::hybrid::{SwitchThresholds, TaskKind};
use crate::kinematic_ctrl::KinematicGains;
use crate::perception::DetectorModel;
use crate::vehicle::{VehicleParams, VehicleState};
use crate::visual_servo::{RobotJacobianMode, ServoGains};

/// Which controller reaches the actuators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Visual servoing while detected, kinematic fallback otherwise.
    #[default]
    Viki,
    /// Visual servoing only; a missed frame commands zero velocity.
    VsOnly,
    /// Visual servoing towards a fixed desired box computed once from an
    /// assumed object model.
    MgbmStatic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Viki, Mode::VsOnly, Mode::MgbmStatic];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Viki => "viki",
            Mode::VsOnly => "vs-only",
            Mode::MgbmStatic => "mgbm-static",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// Sensor placement on the robot: position of the sensor origin in the robot
/// frame (x forward, y left, z up, origin on the ground under the rear axle)
/// and intrinsic Z-Y-X Euler angles. Positive pitch tilts the sensor down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mount {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

impl Mount {
    fn body_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(
            self.roll_deg.to_radians(),
            self.pitch_deg.to_radians(),
            self.yaw_deg.to_radians(),
        )
    }

    /// Robot-from-sensor transform for a sensor whose axes follow the robot
    /// convention.
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_rotation(self.body_rotation(), Vector3::new(self.x, self.y, self.z))
    }

    /// Robot-from-optical transform for a camera (optical z along the
    /// viewing direction, x right, y down).
    pub fn optical_transform(&self) -> RigidTransform {
        let optical = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        let r = self.body_rotation().into_inner() * optical;
        RigidTransform::from_rotation(
            Rotation3::from_matrix_unchecked(r),
            Vector3::new(self.x, self.y, self.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: CameraIntrinsics,
    pub mount: Mount,
    /// Desired object-box centre in this camera (px).
    pub desired_center: [f64; 2],
    /// Depth sensing limit along the optical axis (m).
    pub max_range: f64,
}

impl CameraConfig {
    pub fn desired_pixel(&self) -> PixelPoint {
        PixelPoint::new(self.desired_center[0], self.desired_center[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    pub mount: Mount,
    pub beams: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub virtual_rows: usize,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub azimuth_resolution_deg: f64,
    pub max_range: f64,
}

impl LidarConfig {
    pub fn columns(&self) -> usize {
        ((self.azimuth_max_deg - self.azimuth_min_deg) / self.azimuth_resolution_deg).round() as usize
            + 1
    }
}

/// Axis-aligned box resting on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    /// Ground position of the box centre in the world (m).
    pub position: [f64; 2],
    #[serde(default)]
    pub yaw_deg: f64,
    /// Full side lengths along the box x, y, z axes (m).
    pub extents: [f64; 3],
}

impl ObjectConfig {
    pub fn ground_position(&self) -> Vector2<f64> {
        Vector2::new(self.position[0], self.position[1])
    }

    pub fn extents(&self) -> Vector3<f64> {
        Vector3::from(self.extents)
    }

    /// World pose of the box centre.
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::from_rotation(
            Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw_deg.to_radians()),
            Vector3::new(self.position[0], self.position[1], 0.5 * self.extents[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoConfig {
    pub front_gains: ServoGains,
    pub rear_gains: ServoGains,
    #[serde(default)]
    pub jacobian_mode: RobotJacobianMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicConfig {
    pub forward_gains: KinematicGains,
    pub backward_gains: KinematicGains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    /// Assumed height of the object centre above the ground, used to turn
    /// desired pixels into standoff distances (m).
    pub object_center_height: f64,
    /// Extra distance past the backward standoff at which the turn-around
    /// waypoint is placed (m).
    pub reverse_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryConfig {
    /// Per-tick position noise (m).
    pub sigma_xy: f64,
    /// Per-tick heading noise (rad).
    pub sigma_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgbmConfig {
    /// Side lengths of the object model assumed when building the fixed
    /// desired box (m).
    pub model_extents: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub task: TaskKind,
    /// Control period (s).
    pub dt: f64,
    pub max_ticks: usize,
    /// Ticks allowed before the first usable detection.
    pub warmup_ticks: usize,
    pub seed: u64,
    pub smoothing: bool,
    /// Convert fused Euclidean ranges to optical-axis depth before use.
    #[serde(default)]
    pub range_depth_correction: bool,
    pub vehicle: VehicleParams,
    pub initial_pose: VehicleState,
    pub object: ObjectConfig,
    pub front_camera: CameraConfig,
    pub rear_camera: CameraConfig,
    pub lidar: LidarConfig,
    pub blind_spot: BlindSpotParams,
    pub detector: DetectorModel,
    pub servo: ServoConfig,
    pub kinematic: KinematicConfig,
    #[serde(default)]
    pub thresholds: SwitchThresholds,
    pub placement: PlacementConfig,
    #[serde(default)]
    pub odometry: OdometryConfig,
    pub mgbm: MgbmConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let k = CameraIntrinsics::default();
        Self {
            mode: Mode::Viki,
            task: TaskKind::Full,
            dt: 0.044,
            max_ticks: 3000,
            warmup_ticks: 50,
            seed: 1,
            smoothing: true,
            range_depth_correction: false,
            vehicle: VehicleParams::default(),
            initial_pose: VehicleState::default(),
            object: ObjectConfig {
                position: [6.0, 0.0],
                yaw_deg: 0.0,
                extents: [0.25, 0.35, 0.30],
            },
            front_camera: CameraConfig {
                intrinsics: k,
                mount: Mount {
                    x: 0.8,
                    z: 0.75,
                    pitch_deg: 15.0,
                    ..Default::default()
                },
                desired_center: [640.0, 450.0],
                max_range: 5.0,
            },
            rear_camera: CameraConfig {
                intrinsics: k,
                mount: Mount {
                    x: -0.2,
                    z: 0.5,
                    pitch_deg: 15.0,
                    yaw_deg: 180.0,
                    ..Default::default()
                },
                desired_center: [640.0, 400.0],
                max_range: 5.0,
            },
            lidar: LidarConfig {
                mount: Mount {
                    x: 0.5,
                    z: 1.10,
                    ..Default::default()
                },
                beams: 16,
                min_elevation_deg: -15.0,
                max_elevation_deg: 15.0,
                virtual_rows: 112,
                azimuth_min_deg: -60.0,
                azimuth_max_deg: 60.0,
                azimuth_resolution_deg: 0.2,
                max_range: 100.0,
            },
            blind_spot: BlindSpotParams::default(),
            detector: DetectorModel {
                p_miss: 0.1,
                pixel_noise_sigma: 1.0,
                ..Default::default()
            },
            servo: ServoConfig {
                front_gains: ServoGains(vec![0.85, 0.3, 1.0, 1.0, 1.0]),
                rear_gains: ServoGains(vec![0.85, 1.05, 1.0, 1.0, 1.0]),
                jacobian_mode: RobotJacobianMode::Body,
            },
            kinematic: KinematicConfig {
                forward_gains: KinematicGains([2.0, 1.0]),
                backward_gains: KinematicGains([1.0, 2.0]),
            },
            thresholds: SwitchThresholds::default(),
            placement: PlacementConfig {
                object_center_height: 0.15,
                reverse_distance: 1.0,
            },
            odometry: OdometryConfig::default(),
            mgbm: MgbmConfig {
                model_extents: [0.08, 0.08, 0.25],
            },
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: String| Error::Config(e);
        check(self.dt > 0.0 && self.dt.is_finite(), "dt must be positive")?;
        self.vehicle.validate().map_err(cfg_err)?;
        for cam in [&self.front_camera, &self.rear_camera] {
            cam.intrinsics.validate().map_err(cfg_err)?;
            check(cam.max_range > 0.0, "camera max_range must be positive")?;
        }
        let l = &self.lidar;
        check(l.beams >= 2, "lidar needs at least two beams")?;
        check(l.virtual_rows >= l.beams, "virtual_rows must be >= beams")?;
        check(
            l.min_elevation_deg < l.max_elevation_deg,
            "lidar elevation range is empty",
        )?;
        check(
            l.azimuth_resolution_deg > 0.0 && l.azimuth_min_deg < l.azimuth_max_deg,
            "lidar azimuth window is empty",
        )?;
        check(l.max_range > 0.0, "lidar max_range must be positive")?;
        let b = &self.blind_spot;
        check(
            b.radius > 0.0 && b.step > 0.0 && b.extent > 0.0,
            "blind_spot parameters must be positive",
        )?;
        check(
            self.object.extents.iter().all(|e| *e > 0.0),
            "object extents must be positive",
        )?;
        check(
            self.mgbm.model_extents.iter().all(|e| *e > 0.0),
            "mgbm model extents must be positive",
        )?;
        self.detector.validate().map_err(cfg_err)?;
        self.servo.front_gains.validate().map_err(cfg_err)?;
        self.servo.rear_gains.validate().map_err(cfg_err)?;
        self.kinematic.forward_gains.validate().map_err(cfg_err)?;
        self.kinematic.backward_gains.validate().map_err(cfg_err)?;
        self.thresholds.validate().map_err(cfg_err)?;
        check(
            self.placement.object_center_height >= 0.0 && self.placement.reverse_distance >= 0.0,
            "placement distances must be non-negative",
        )?;
        check(
            self.odometry.sigma_xy >= 0.0 && self.odometry.sigma_theta >= 0.0,
            "odometry noise must be non-negative",
        )?;
        Ok(())
    }
}
