use std::cell::RefCell;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Rotation2, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{CameraConfig, Mode, ScenarioConfig};
use super::metrics::{compute_metrics, RunMetrics};
use super::record::{ControllerUsed, DetectionTrace, LogRecord, TraceRow};
use super::sensors::{cached_blind_spot_mask, fuse_region, CameraSensor, LidarSensor, Region};
use super::world::{ray_ground, World};
use crate::error::{Error, Result};
use crate::fusion::{BlindSpotMask, DepthImage};
use crate::geometry::{velocity_adjoint, RigidTransform, VelocityAdjoint};
use crate::hybrid::{
    hybrid_law, placement_step, smooth, PlacementStage, PlacementState, TargetMemory, TaskKind,
};
use crate::kinematic_ctrl::{robot_velocity_kin, standoff_error, KinematicGains};
use crate::perception::{
    localize, object_depth, projected_hull, range_to_axis_depth, shrink_bbox, BoundingBox,
    Detection, SyntheticDetector,
};
use crate::vehicle::{command_from_twist, integrate, Twist2, VehicleState};
use crate::visual_servo::{
    camera_twist, current_features, desired_depth, desired_features, robot_velocity_vs,
    DesiredPlacement,
    FeatureSet, ServoGains, ServoGeometry,
};

/// Everything a run produces besides the log itself.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: Vec<LogRecord>,
    pub trace: DetectionTrace,
    /// Ideal final rear-axle position for the configured task.
    pub target: Vector2<f64>,
    /// Mean wall-clock time per tick (ms).
    pub iteration_time_mean: f64,
}

impl RunOutput {
    /// Metrics of this run against its own ideal target, timing included.
    pub fn metrics(&self) -> Result<RunMetrics> {
        let mut m = compute_metrics(&self.log, &self.target)?;
        m.iteration_time_mean = self.iteration_time_mean;
        Ok(m)
    }
}

/// Runs the closed loop and returns one record per tick.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<LogRecord>> {
    Ok(simulate(cfg, None)?.log)
}

/// Where the ray through `pixel` meets the horizontal plane at `height`, in
/// the robot frame, together with its optical-axis depth.
pub fn placement_point(cam: &CameraConfig, height: f64) -> Result<(Vector3<f64>, f64)> {
    let mount = cam.mount.optical_transform();
    let p = cam.desired_pixel();
    let dir = mount.transform_vector(&cam.intrinsics.ray(p.u, p.v));
    let origin = mount.translation();
    let s = ray_ground(origin.z - height, dir.z).ok_or_else(|| {
        Error::Config("desired pixel does not look down at the object height".into())
    })?;
    Ok((origin + dir * s, s))
}

/// Ideal final rear-axle position, with the robot aligned to the approach
/// line and the true projected hull of the object centred vertically on the
/// final camera's desired pixel.
///
/// The placement-plane intersection seeds the search; the hull condition is
/// then solved by bisection along the approach line.
pub fn ground_truth_target(cfg: &ScenarioConfig) -> Result<Vector2<f64>> {
    let obj = cfg.object.ground_position();
    let h0 = cfg.initial_pose.control_point(cfg.vehicle.wheelbase);
    let height = cfg.placement.object_center_height;
    let (cam, heading) = match cfg.task {
        TaskKind::Forward => (&cfg.front_camera, obj - h0),
        TaskKind::Full => (&cfg.rear_camera, obj - h0),
        TaskKind::Backward => (&cfg.rear_camera, h0 - obj),
    };
    let p = placement_point(cam, height)?.0;
    let yaw = heading.y.atan2(heading.x);
    let rot = Rotation2::new(yaw);
    let seed = obj - rot * Vector2::new(p.x, p.y);
    let along = rot * Vector2::x();
    let mount = cam.mount.optical_transform();
    let object = cfg.object.pose();
    let extents = cfg.object.extents();
    let want = cam.desired_pixel().v;
    let offset = |s: f64| -> Option<f64> {
        let pos = seed + along * s;
        let cam_world = RigidTransform::planar(pos.x, pos.y, yaw).compose(&mount);
        let hull = projected_hull(&cam_world.inverse().compose(&object), &extents, &cam.intrinsics)?;
        Some(0.5 * (hull.v0 + hull.v2) - want)
    };
    let (mut lo, mut hi) = (-0.5, 0.5);
    let no_root = || Error::Config("object hull cannot be centred on the desired pixel".into());
    let f_lo = offset(lo).ok_or_else(no_root)?;
    let f_hi = offset(hi).ok_or_else(no_root)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(no_root());
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = offset(mid).ok_or_else(no_root)?;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(seed + along * (0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Front,
    Rear,
}

/// One camera together with the servo parameters used while it is active.
struct ServoRig {
    camera: CameraSensor,
    adjoint: VelocityAdjoint,
    placement: DesiredPlacement,
    gains: ServoGains,
    kin_gains: KinematicGains,
    /// Distance from the control point to the object at final placement,
    /// assuming the object centre at its configured height.
    standoff: f64,
    static_desired: FeatureSet,
}

impl ServoRig {
    fn new(
        cfg: &ScenarioConfig,
        cam_cfg: &CameraConfig,
        gains: &ServoGains,
        kin_gains: KinematicGains,
    ) -> Result<Self> {
        let camera = CameraSensor::new(cam_cfg);
        let (point, depth) = placement_point(cam_cfg, cfg.placement.object_center_height)?;
        let d = cfg.vehicle.wheelbase;
        let standoff = (Vector2::new(point.x, point.y) - Vector2::new(d, 0.0)).norm();
        let model = RigidTransform::from_translation(point);
        let static_box = projected_hull(
            &camera.mount.inverse().compose(&model),
            &Vector3::from(cfg.mgbm.model_extents),
            &camera.intrinsics,
        )
        .ok_or_else(|| Error::Config("mgbm model is not visible at the target pose".into()))?;
        Ok(Self {
            adjoint: velocity_adjoint(&camera.mount.inverse()),
            camera,
            placement: DesiredPlacement {
                center: cam_cfg.desired_pixel(),
                fallback_depth: depth,
            },
            gains: gains.clone(),
            kin_gains,
            standoff,
            static_desired: current_features(&static_box),
        })
    }
}

/// Visual-servoing quantities derived from one usable detection.
struct Observation {
    features: FeatureSet,
    desired: FeatureSet,
    z_o: f64,
    vs: Twist2,
    cam_twist_norm: f64,
    object_world: Vector2<f64>,
    /// Ground distance from the control point to where the observed point
    /// would sit at the desired pixel and desired depth.
    standoff: f64,
}

struct Simulator<'a> {
    cfg: &'a ScenarioConfig,
    world: World,
    front: ServoRig,
    rear: ServoRig,
    lidar: LidarSensor,
    mask: Arc<BlindSpotMask>,
    buffers: RefCell<DepthBuffers>,
}

/// Full-resolution scratch images reused across ticks.
struct DepthBuffers {
    camera: DepthImage,
    lidar: DepthImage,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let front = ServoRig::new(
            cfg,
            &cfg.front_camera,
            &cfg.servo.front_gains,
            cfg.kinematic.forward_gains,
        )?;
        let rear = ServoRig::new(
            cfg,
            &cfg.rear_camera,
            &cfg.servo.rear_gains,
            cfg.kinematic.backward_gains,
        )?;
        let lidar = LidarSensor::new(&cfg.lidar);
        let mask = cached_blind_spot_mask(
            &front.camera.intrinsics,
            &lidar.camera_from_lidar(&front.camera),
            &cfg.blind_spot,
        );
        let k = &front.camera.intrinsics;
        let rk = &rear.camera.intrinsics;
        if (k.width, k.height) != (rk.width, rk.height) {
            return Err(Error::Config("front and rear cameras must share a resolution".into()));
        }
        let buffers = RefCell::new(DepthBuffers {
            camera: DepthImage::new(k.width, k.height),
            lidar: DepthImage::new(k.width, k.height),
        });
        Ok(Self {
            buffers,
            world: World::new(cfg.object.pose(), cfg.object.extents()),
            cfg,
            front,
            rear,
            lidar,
            mask,
        })
    }

    fn rig(&self, side: Side) -> &ServoRig {
        match side {
            Side::Front => &self.front,
            Side::Rear => &self.rear,
        }
    }

    /// Depth the servo loop reads for `side`, valid inside `region` only:
    /// fused LiDAR + camera at the front, camera only at the rear.
    fn depth<'b>(
        &self,
        side: Side,
        robot: &RigidTransform,
        region: &Region,
        buffers: &'b mut DepthBuffers,
    ) -> &'b DepthImage {
        let rig = self.rig(side);
        rig.camera.render_region(robot, &self.world, region, &mut buffers.camera);
        if side == Side::Front {
            self.lidar
                .depth_in_camera_region(robot, &self.world, &rig.camera, region, &mut buffers.lidar);
            fuse_region(&buffers.lidar, &mut buffers.camera, &self.mask, region);
        }
        &buffers.camera
    }

    fn observe(
        &self,
        side: Side,
        bb: &BoundingBox,
        true_robot: &RigidTransform,
        odom: &VehicleState,
    ) -> Result<Observation> {
        let rig = self.rig(side);
        let k = &rig.camera.intrinsics;
        let shrunk = shrink_bbox(bb)?;
        let region = Region::covering(&shrunk, &rig.placement.center, k.width, k.height);
        let mut buffers = self.buffers.borrow_mut();
        let depth = self.depth(side, true_robot, &region, &mut buffers);
        let mut z_o = object_depth(&shrunk, depth)?;
        if side == Side::Front && self.cfg.range_depth_correction {
            z_o = range_to_axis_depth(&bb.center(), z_o, k);
        }
        let features = current_features(bb);
        let (desired, z_d) = match self.cfg.mode {
            Mode::MgbmStatic => (rig.static_desired, rig.placement.fallback_depth),
            Mode::Viki | Mode::VsOnly => (
                desired_features(bb, z_o, &rig.placement, depth)?,
                desired_depth(&rig.placement, depth),
            ),
        };
        let c = rig.placement.center;
        let goal = rig.camera.mount.transform_point(&(k.ray(c.u, c.v) * z_d));
        let standoff = (Vector2::new(goal.x, goal.y) - Vector2::new(self.cfg.vehicle.wheelbase, 0.0)).norm();
        let geom = ServoGeometry {
            intrinsics: k,
            camera_from_robot: &rig.adjoint,
            heading: odom.theta,
            wheelbase: self.cfg.vehicle.wheelbase,
            jacobian_mode: self.cfg.servo.jacobian_mode,
        };
        let vs = robot_velocity_vs(&features, &desired, z_o, &rig.gains, &geom)?;
        let cam_twist_norm = camera_twist(&features, &desired, z_o, k, &rig.gains)?.norm();
        let est = localize(&bb.center(), z_o, k)?;
        let odom_pose = RigidTransform::planar(odom.x, odom.y, odom.theta);
        let mut memory = TargetMemory::new();
        let object_world = memory.update_target(&est, &rig.camera.pose_in_world(&odom_pose));
        Ok(Observation {
            features,
            desired,
            z_o,
            vs,
            cam_twist_norm,
            object_world,
            standoff,
        })
    }
}

fn features_array(f: &FeatureSet) -> [f64; 8] {
    let v = f.to_vector();
    std::array::from_fn(|i| v[i])
}

/// Full run: the log, the detector trace, the ideal target and timing.
/// `dropout` forces a miss on every tick where the given trace recorded none.
pub fn simulate(cfg: &ScenarioConfig, dropout: Option<&DetectionTrace>) -> Result<RunOutput> {
    let sim = Simulator::new(cfg)?;
    let target = ground_truth_target(cfg)?;
    let params = &cfg.vehicle;
    let d = params.wheelbase;

    let mut detector_model = cfg.detector.clone();
    detector_model.seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    let mut detector = SyntheticDetector::new(detector_model);
    let mut odom_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_F42D_4C95_7F2D);

    let mut truth = cfg.initial_pose;
    let mut drift = Vector3::zeros();
    let mut odom = truth;
    let mut placement = PlacementState::start(cfg.task);
    let mut memory = TargetMemory::new();
    let mut waypoint: Option<Vector2<f64>> = None;
    let mut prev = Twist2::ZERO;
    let mut standoff = [sim.front.standoff, sim.rear.standoff];

    let mut log = Vec::with_capacity(cfg.max_ticks.min(100_000));
    let mut trace = DetectionTrace::default();
    let mut elapsed = 0.0f64;

    for tick in 0..cfg.max_ticks {
        let started = Instant::now();
        let t = tick as f64 * cfg.dt;
        let stage = placement.stage;
        if stage == PlacementStage::Done {
            log.push(LogRecord {
                tick,
                t,
                state_id: stage.id(),
                c: false,
                controller_used: ControllerUsed::None,
                features: None,
                desired: None,
                max_feature_err: None,
                nu_cmd: 0.0,
                psi_cmd: 0.0,
                omega_cmd: 0.0,
                x: odom.x,
                y: odom.y,
                theta: odom.theta,
                x_true: truth.x,
                y_true: truth.y,
                theta_true: truth.theta,
                x_d: None,
                y_d: None,
                z_o: None,
                cam_twist_norm: None,
            });
            break;
        }
        if memory.get().is_none() && tick >= cfg.warmup_ticks {
            return Err(Error::FirstDetectionTimeout(cfg.warmup_ticks));
        }

        let side = match stage {
            PlacementStage::Forward => Some(Side::Front),
            PlacementStage::Backward => Some(Side::Rear),
            PlacementStage::Rotate | PlacementStage::Done => None,
        };
        let true_pose = RigidTransform::planar(truth.x, truth.y, truth.theta);
        // the detector runs every tick so its random stream stays aligned
        let probe = sim.rig(side.unwrap_or(Side::Front));
        let mut detection = detector.detect(
            sim.world.object_pose(),
            &sim.world.extents(),
            &probe.camera.pose_in_world(&true_pose),
            &probe.camera.intrinsics,
            t,
        );
        if side.is_none() || dropout.and_then(|tr| tr.detected_at(tick)) == Some(false) {
            detection = Detection::missed();
        }
        trace.rows.push(TraceRow {
            t,
            bbox: detection.bbox,
        });

        let obs = match (side, detection.bbox) {
            (Some(s), Some(bb)) => sim.observe(s, &bb, &true_pose, &odom).ok(),
            _ => None,
        };
        if let (Some(o), Some(s)) = (&obs, side) {
            memory.set(o.object_world);
            standoff[s as usize] = o.standoff;
        }

        // kinematic candidate towards the current stage's set-point
        let h = odom.control_point(d);
        let kin_err = match stage {
            PlacementStage::Rotate => waypoint.map(|w| w - h),
            PlacementStage::Forward => memory
                .get()
                .map(|obj| standoff_error(&h, &obj, standoff[Side::Front as usize])),
            PlacementStage::Backward => memory
                .get()
                .map(|obj| standoff_error(&h, &obj, standoff[Side::Rear as usize])),
            PlacementStage::Done => None,
        };
        let kin_gains = match stage {
            PlacementStage::Backward => sim.rear.kin_gains,
            _ => sim.front.kin_gains,
        };
        let kin_out = kin_err.map(|e| robot_velocity_kin(&e, odom.theta, d, &kin_gains));

        let detected = obs.is_some();
        let vs_out = obs.as_ref().map_or(Twist2::ZERO, |o| o.vs);
        let (raw, used) = if stage == PlacementStage::Rotate {
            (kin_out.unwrap_or(Twist2::ZERO), ControllerUsed::Kin)
        } else if cfg.mode == Mode::VsOnly {
            if detected {
                (vs_out, ControllerUsed::Vs)
            } else {
                (Twist2::ZERO, ControllerUsed::None)
            }
        } else {
            match hybrid_law(detected, vs_out, kin_out) {
                Ok(v) if detected => (v, ControllerUsed::Vs),
                Ok(v) => (v, ControllerUsed::Kin),
                Err(Error::NoTargetYet) => (Twist2::ZERO, ControllerUsed::None),
                Err(e) => return Err(e),
            }
        };
        let w_max = params.max_yaw_rate();
        let clamped = Twist2::new(
            raw.v.clamp(-params.max_speed, params.max_speed),
            raw.omega.clamp(-w_max, w_max),
        );
        let out = if cfg.smoothing {
            smooth(clamped, prev)
        } else {
            clamped
        };
        prev = out;
        let cmd = command_from_twist(&out, params);

        truth = integrate(&truth, &cmd, cfg.dt, params);
        let noise: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut odom_rng));
        drift += Vector3::new(
            cfg.odometry.sigma_xy * noise[0],
            cfg.odometry.sigma_xy * noise[1],
            cfg.odometry.sigma_theta * noise[2],
        );
        odom = VehicleState {
            x: truth.x + drift.x,
            y: truth.y + drift.y,
            theta: truth.theta + drift.z,
        };

        let feature_err: Option<Vec<f64>> = obs
            .as_ref()
            .map(|o| o.features.error(&o.desired).iter().copied().collect());
        let pos_err = if stage == PlacementStage::Rotate {
            waypoint.map(|w| w - odom.control_point(d))
        } else {
            None
        };
        let next = placement_step(
            placement,
            cfg.task,
            feature_err.as_deref(),
            pos_err.as_ref(),
            &cfg.thresholds,
            tick + 1,
        );
        if next.stage == PlacementStage::Rotate && stage != PlacementStage::Rotate {
            waypoint = memory.get().map(|obj| {
                let h = odom.control_point(d);
                let dir = (obj - h).try_normalize(1e-12).unwrap_or_else(|| odom.heading());
                obj + dir * (sim.rear.standoff + cfg.placement.reverse_distance)
            });
        }
        placement = next;

        let setpoint = kin_err.map(|e| h + e);
        log.push(LogRecord {
            tick,
            t,
            state_id: stage.id(),
            c: detected,
            controller_used: used,
            features: obs.as_ref().map(|o| features_array(&o.features)),
            desired: obs.as_ref().map(|o| features_array(&o.desired)),
            max_feature_err: feature_err
                .as_ref()
                .map(|e| e.iter().fold(0.0f64, |m, x| m.max(x.abs()))),
            nu_cmd: cmd.speed,
            psi_cmd: cmd.steering,
            omega_cmd: cmd.speed * cmd.steering.tan() / d,
            x: odom.x,
            y: odom.y,
            theta: odom.theta,
            x_true: truth.x,
            y_true: truth.y,
            theta_true: truth.theta,
            x_d: setpoint.map(|p| p.x),
            y_d: setpoint.map(|p| p.y),
            z_o: obs.as_ref().map(|o| o.z_o),
            cam_twist_norm: obs.as_ref().map(|o| o.cam_twist_norm),
        });
        elapsed += started.elapsed().as_secs_f64();
    }

    let iteration_time_mean = if log.is_empty() {
        0.0
    } else {
        1e3 * elapsed / log.len() as f64
    };
    Ok(RunOutput {
        log,
        trace,
        target,
        iteration_time_mean,
    })
}
