//! One complete front-camera control iteration on prepared sensor inputs,
//! at full image resolution. Used for timing; the closed-loop simulator
//! takes a region-restricted path that reads the same values.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::Vector2;

use super::config::ScenarioConfig;
use super::runner::placement_point;
use super::sensors::{cached_blind_spot_mask, CameraSensor, LidarSensor};
use super::world::World;
use crate::error::{Error, Result};
use crate::fusion::{
    fuse_depth_into, interpolate_range_image, project_cloud_into, range_to_cloud, BlindSpotMask,
    DepthImage, RangeImage,
};
use crate::geometry::{velocity_adjoint, RigidTransform, VelocityAdjoint};
use crate::hybrid::{hybrid_law, smooth, TargetMemory};
use crate::kinematic_ctrl::{robot_velocity_kin, standoff_error};
use crate::perception::{localize, object_depth, projected_hull, shrink_bbox, BoundingBox};
use crate::vehicle::{command_from_twist, Twist2, VehicleCommand, VehicleState};
use crate::visual_servo::{
    camera_twist, current_features, desired_features, robot_velocity_vs, DesiredPlacement,
    ServoGeometry,
};

/// Raw sensor data for one tick plus everything needed to process it.
pub struct IterationFixture {
    cfg: ScenarioConfig,
    camera: CameraSensor,
    lidar: LidarSensor,
    mask: Arc<BlindSpotMask>,
    adjoint: VelocityAdjoint,
    placement: DesiredPlacement,
    standoff: f64,
    robot: VehicleState,
    /// Native 16-beam scan.
    pub scan: RangeImage,
    /// Front camera depth image.
    pub camera_depth: DepthImage,
    /// Noise-free detection of the object.
    pub bbox: BoundingBox,
    /// Projected-LiDAR and fused images, reused across calls.
    scratch: RefCell<(DepthImage, DepthImage)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutput {
    pub twist: Twist2,
    pub command: VehicleCommand,
    pub cam_twist_norm: f64,
}

impl IterationFixture {
    /// Synthesizes the front sensors' view of the configured scene from `robot`.
    pub fn new(cfg: &ScenarioConfig, robot: VehicleState) -> Result<Self> {
        cfg.validate()?;
        let world = World::new(cfg.object.pose(), cfg.object.extents());
        let camera = CameraSensor::new(&cfg.front_camera);
        let lidar = LidarSensor::new(&cfg.lidar);
        let mask = cached_blind_spot_mask(
            &camera.intrinsics,
            &lidar.camera_from_lidar(&camera),
            &cfg.blind_spot,
        );
        let pose = RigidTransform::planar(robot.x, robot.y, robot.theta);
        let cam_from_object = camera.pose_in_world(&pose).inverse().compose(world.object_pose());
        let bbox = projected_hull(&cam_from_object, &world.extents(), &camera.intrinsics)
            .ok_or_else(|| Error::Config("object not visible from the fixture pose".into()))?;
        let (point, depth) = placement_point(&cfg.front_camera, cfg.placement.object_center_height)?;
        let d = cfg.vehicle.wheelbase;
        Ok(Self {
            scan: lidar.scan(&pose, &world),
            camera_depth: camera.render(&pose, &world),
            bbox,
            adjoint: velocity_adjoint(&camera.mount.inverse()),
            placement: DesiredPlacement {
                center: cfg.front_camera.desired_pixel(),
                fallback_depth: depth,
            },
            standoff: (Vector2::new(point.x, point.y) - Vector2::new(d, 0.0)).norm(),
            scratch: RefCell::new((
                DepthImage::new(camera.intrinsics.width, camera.intrinsics.height),
                DepthImage::new(camera.intrinsics.width, camera.intrinsics.height),
            )),
            cfg: cfg.clone(),
            camera,
            lidar,
            mask,
            robot,
        })
    }

    /// Fusion, perception, both controllers, gating, smoothing and actuation.
    pub fn run(&self, memory: &mut TargetMemory, prev: Twist2) -> Result<IterationOutput> {
        let k = &self.camera.intrinsics;
        let dense = interpolate_range_image(&self.scan, self.lidar.virtual_rows);
        let mut scratch = self.scratch.borrow_mut();
        let (lidar_depth, fused) = &mut *scratch;
        project_cloud_into(
            &range_to_cloud(&dense),
            &self.lidar.camera_from_lidar(&self.camera),
            k,
            lidar_depth,
        );
        fuse_depth_into(lidar_depth, &self.camera_depth, &self.mask, fused)?;
        let fused = &*fused;

        let z_o = object_depth(&shrink_bbox(&self.bbox)?, fused)?;
        let f = current_features(&self.bbox);
        let fd = desired_features(&self.bbox, z_o, &self.placement, fused)?;
        let d = self.cfg.vehicle.wheelbase;
        let geom = ServoGeometry {
            intrinsics: k,
            camera_from_robot: &self.adjoint,
            heading: self.robot.theta,
            wheelbase: d,
            jacobian_mode: self.cfg.servo.jacobian_mode,
        };
        let gains = &self.cfg.servo.front_gains;
        let vs = robot_velocity_vs(&f, &fd, z_o, gains, &geom)?;
        let cam_twist_norm = camera_twist(&f, &fd, z_o, k, gains)?.norm();

        let est = localize(&self.bbox.center(), z_o, k)?;
        let pose = RigidTransform::planar(self.robot.x, self.robot.y, self.robot.theta);
        let obj = memory.update_target(&est, &self.camera.pose_in_world(&pose));
        let h = self.robot.control_point(d);
        let kin = robot_velocity_kin(
            &standoff_error(&h, &obj, self.standoff),
            self.robot.theta,
            d,
            &self.cfg.kinematic.forward_gains,
        );

        let raw = hybrid_law(true, vs, Some(kin))?;
        let params = &self.cfg.vehicle;
        let w_max = params.max_yaw_rate();
        let clamped = Twist2::new(
            raw.v.clamp(-params.max_speed, params.max_speed),
            raw.omega.clamp(-w_max, w_max),
        );
        let twist = if self.cfg.smoothing {
            smooth(clamped, prev)
        } else {
            clamped
        };
        Ok(IterationOutput {
            twist,
            command: command_from_twist(&twist, params),
            cam_twist_norm,
        })
    }
}
