use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Vector3;

use super::config::{CameraConfig, LidarConfig};
use super::world::{ray_ground, World};
use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::fusion::{
    blind_spot_mask, interpolate_range_image, linspace, pixel_of, range_to_cloud, BlindSpotMask,
    BlindSpotParams, DepthImage, RangeImage,
};
use crate::geometry::RigidTransform;
use crate::perception::{projected_hull, BoundingBox};

/// Inclusive pixel rectangle. Region-restricted rendering and fusion write
/// only inside it and leave every other pixel of the target image untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub u_lo: usize,
    pub u_hi: usize,
    pub v_lo: usize,
    pub v_hi: usize,
}

impl Region {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            u_lo: 0,
            u_hi: width - 1,
            v_lo: 0,
            v_hi: height - 1,
        }
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        (self.u_lo..=self.u_hi).contains(&u) && (self.v_lo..=self.v_hi).contains(&v)
    }

    /// Smallest region holding the pixels a depth average over `bb` reads
    /// (rounded and clipped the same way) plus the pixel nearest `extra`.
    pub fn covering(bb: &BoundingBox, extra: &PixelPoint, width: usize, height: usize) -> Self {
        let clip = |x: f64, n: usize| (x.round().max(0.0) as usize).min(n - 1);
        let (eu, ev) = (clip(extra.u, width), clip(extra.v, height));
        Self {
            u_lo: clip(bb.u0, width).min(eu),
            u_hi: clip(bb.u2, width).max(eu),
            v_lo: clip(bb.v0, height).min(ev),
            v_hi: clip(bb.v2, height).max(ev),
        }
    }

    fn fill(&self, img: &mut DepthImage, value: f32) {
        let w = img.width();
        for v in self.v_lo..=self.v_hi {
            img.data_mut()[v * w + self.u_lo..=v * w + self.u_hi].fill(value);
        }
    }
}

/// Region-restricted fusion: inside `region`, `camera` keeps its value where
/// the mask is set and takes the LiDAR value elsewhere.
pub fn fuse_region(lidar: &DepthImage, camera: &mut DepthImage, mask: &BlindSpotMask, region: &Region) {
    let w = camera.width();
    for v in region.v_lo..=region.v_hi {
        let span = v * w + region.u_lo..=v * w + region.u_hi;
        let masked = &mask.data()[span.clone()];
        let from_lidar = &lidar.data()[span.clone()];
        for ((c, &m), &l) in camera.data_mut()[span].iter_mut().zip(masked).zip(from_lidar) {
            if !m {
                *c = l;
            }
        }
    }
}

/// Depth camera rigidly mounted on the robot. The ground is static relative
/// to the robot on a flat floor, so its depth image is rendered once.
#[derive(Debug, Clone)]
pub struct CameraSensor {
    pub intrinsics: CameraIntrinsics,
    /// Robot-from-optical.
    pub mount: RigidTransform,
    pub max_range: f64,
    ground: DepthImage,
}

impl CameraSensor {
    pub fn new(cfg: &CameraConfig) -> Self {
        let k = cfg.intrinsics;
        let mount = cfg.mount.optical_transform();
        let mut ground = DepthImage::new(k.width, k.height);
        let height = mount.translation().z;
        let r = mount.rotation();
        for v in 0..k.height {
            for u in 0..k.width {
                let dir = r * k.ray(u as f64, v as f64);
                if let Some(z) = ray_ground(height, dir.z) {
                    if z <= cfg.max_range {
                        ground.set(u, v, z as f32);
                    }
                }
            }
        }
        Self {
            intrinsics: k,
            mount,
            max_range: cfg.max_range,
            ground,
        }
    }

    pub fn pose_in_world(&self, robot: &RigidTransform) -> RigidTransform {
        robot.compose(&self.mount)
    }

    pub fn ground_depth(&self) -> &DepthImage {
        &self.ground
    }

    /// Optical-axis depth image of the scene seen from `robot`.
    pub fn render(&self, robot: &RigidTransform, world: &World) -> DepthImage {
        let k = &self.intrinsics;
        let mut img = DepthImage::new(k.width, k.height);
        self.render_region(robot, world, &Region::full(k.width, k.height), &mut img);
        img
    }

    /// [`Self::render`] restricted to `region` of `img`.
    pub fn render_region(
        &self,
        robot: &RigidTransform,
        world: &World,
        region: &Region,
        img: &mut DepthImage,
    ) {
        let k = &self.intrinsics;
        for v in region.v_lo..=region.v_hi {
            let span = v * k.width + region.u_lo..=v * k.width + region.u_hi;
            img.data_mut()[span.clone()].copy_from_slice(&self.ground.data()[span]);
        }
        let cam = self.pose_in_world(robot);
        let cam_from_object = cam.inverse().compose(world.object_pose());
        let Some(hull) = projected_hull(&cam_from_object, &world.extents(), k) else {
            return;
        };
        let object_from_cam = world.object_from(&cam);
        let origin = *object_from_cam.translation();
        let rot = object_from_cam.rotation();
        let (u_lo, u_hi) = (hull.u0.floor() as usize, (hull.u2.ceil() as usize).min(k.width - 1));
        let v_lo = (hull.v0.floor() as usize).max(region.v_lo);
        let v_hi = (hull.v2.ceil() as usize).min(k.height - 1).min(region.v_hi);
        let step = rot.column(0) / k.fu;
        for v in v_lo..=v_hi {
            // ray with unit optical z, so the hit parameter is the depth;
            // stepping always starts at the hull edge so results do not
            // depend on the region
            let mut dir = rot * k.ray(u_lo as f64, v as f64);
            let row = &mut img.data_mut()[v * k.width..(v + 1) * k.width];
            for (u, cell) in row.iter_mut().enumerate().take(u_hi + 1).skip(u_lo) {
                if u >= region.u_lo && u <= region.u_hi {
                    if let Some(z) = world.box_hit(&origin, &dir) {
                        let z = z as f32;
                        if f64::from(z) <= self.max_range && (*cell == 0.0 || z < *cell) {
                            *cell = z;
                        }
                    }
                }
                dir += step;
            }
        }
    }
}

/// Spinning multi-beam LiDAR with a fixed azimuth window.
#[derive(Debug, Clone)]
pub struct LidarSensor {
    /// Robot-from-LiDAR.
    pub mount: RigidTransform,
    pub virtual_rows: usize,
    max_range: f64,
    ground: RangeImage,
    /// Unit beam directions in the LiDAR frame, row-major.
    dirs: Vec<Vector3<f64>>,
}

impl LidarSensor {
    pub fn new(cfg: &LidarConfig) -> Self {
        let mount = cfg.mount.transform();
        let elevations: Vec<f64> =
            linspace(cfg.min_elevation_deg, cfg.max_elevation_deg, cfg.beams)
                .into_iter()
                .map(f64::to_radians)
                .collect();
        let cols = cfg.columns();
        let mut ground = RangeImage::empty(
            elevations.clone(),
            cfg.azimuth_min_deg.to_radians(),
            cfg.azimuth_resolution_deg.to_radians(),
            cols,
        );
        let mut dirs = Vec::with_capacity(elevations.len() * cols);
        let height = mount.translation().z;
        for (row, el) in elevations.iter().enumerate() {
            let (se, ce) = el.sin_cos();
            for col in 0..cols {
                let (sa, ca) = ground.azimuth(col).sin_cos();
                let d = Vector3::new(ce * ca, ce * sa, se);
                let dz = mount.transform_vector(&d).z;
                if let Some(r) = ray_ground(height, dz) {
                    if r <= cfg.max_range {
                        ground.set(row, col, r as f32);
                    }
                }
                dirs.push(d);
            }
        }
        Self {
            mount,
            virtual_rows: cfg.virtual_rows,
            max_range: cfg.max_range,
            ground,
            dirs,
        }
    }

    /// Native range image seen from `robot`.
    pub fn scan(&self, robot: &RigidTransform, world: &World) -> RangeImage {
        let mut ri = self.ground.clone();
        let lidar = robot.compose(&self.mount);
        let object_from_lidar = world.object_from(&lidar);
        let origin = *object_from_lidar.translation();
        let rot = object_from_lidar.rotation();
        let Some((c_lo, c_hi)) = self.object_columns(&lidar, world) else {
            return ri;
        };
        for row in 0..ri.rows() {
            for col in c_lo..=c_hi {
                let dir = rot * self.dirs[row * ri.cols + col];
                if let Some(r) = world.box_hit(&origin, &dir) {
                    let current = ri.get(row, col);
                    if r <= self.max_range && (current == 0.0 || (r as f32) < current) {
                        ri.set(row, col, r as f32);
                    }
                }
            }
        }
        ri
    }

    /// Column span covering the object's azimuth extent, or `None` when it
    /// lies outside the scan window.
    fn object_columns(&self, lidar: &RigidTransform, world: &World) -> Option<(usize, usize)> {
        let lidar_from_object = lidar.inverse().compose(world.object_pose());
        let half = world.extents() * 0.5;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..8 {
            let c = Vector3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            );
            let p = lidar_from_object.transform_point(&c);
            if p.x <= 0.0 {
                // object straddles or sits behind the sensor: scan everything
                return Some((0, self.ground.cols - 1));
            }
            let az = p.y.atan2(p.x);
            lo = lo.min(az);
            hi = hi.max(az);
        }
        let step = self.ground.azimuth_step;
        let c_lo = ((lo - self.ground.azimuth_start) / step).floor().max(0.0);
        let c_hi = ((hi - self.ground.azimuth_start) / step).ceil();
        let last = (self.ground.cols - 1) as f64;
        if c_hi < 0.0 || c_lo > last {
            return None;
        }
        Some((c_lo as usize, c_hi.min(last) as usize))
    }

    /// Scan, densify and project into a camera as a Euclidean-range image.
    pub fn depth_in_camera(
        &self,
        robot: &RigidTransform,
        world: &World,
        camera: &CameraSensor,
    ) -> DepthImage {
        let k = &camera.intrinsics;
        let mut img = DepthImage::new(k.width, k.height);
        self.depth_in_camera_region(robot, world, camera, &Region::full(k.width, k.height), &mut img);
        img
    }

    /// [`Self::depth_in_camera`] restricted to `region` of `img`.
    pub fn depth_in_camera_region(
        &self,
        robot: &RigidTransform,
        world: &World,
        camera: &CameraSensor,
        region: &Region,
        img: &mut DepthImage,
    ) {
        region.fill(img, 0.0);
        let dense = interpolate_range_image(&self.scan(robot, world), self.virtual_rows);
        let cloud = range_to_cloud(&dense);
        let cam_from_lidar = self.camera_from_lidar(camera);
        for p in &cloud.points {
            let q = cam_from_lidar.transform_point(p);
            if let Some((u, v)) = pixel_of(&q, &camera.intrinsics) {
                if region.contains(u, v) {
                    img.set_nearest(u, v, q.norm() as f32);
                }
            }
        }
    }

    pub fn camera_from_lidar(&self, camera: &CameraSensor) -> RigidTransform {
        camera.mount.inverse().compose(&self.mount)
    }
}

type MaskKey = Vec<u64>;

fn mask_cache() -> &'static Mutex<HashMap<MaskKey, Arc<BlindSpotMask>>> {
    static CACHE: OnceLock<Mutex<HashMap<MaskKey, Arc<BlindSpotMask>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// [`blind_spot_mask`] memoized on its exact inputs; the dense ground
/// sampling dominates start-up time otherwise.
pub fn cached_blind_spot_mask(
    k: &CameraIntrinsics,
    cam_from_lidar: &RigidTransform,
    params: &BlindSpotParams,
) -> Arc<BlindSpotMask> {
    let mut key: MaskKey = vec![
        k.fu.to_bits(),
        k.fv.to_bits(),
        k.cu.to_bits(),
        k.cv.to_bits(),
        k.width as u64,
        k.height as u64,
        params.radius.to_bits(),
        params.ground_z.to_bits(),
        params.extent.to_bits(),
        params.step.to_bits(),
    ];
    key.extend(cam_from_lidar.rotation().iter().map(|x| x.to_bits()));
    key.extend(cam_from_lidar.translation().iter().map(|x| x.to_bits()));
    if let Some(m) = mask_cache().lock().expect("mask cache poisoned").get(&key) {
        return Arc::clone(m);
    }
    let mask = Arc::new(blind_spot_mask(k, cam_from_lidar, params));
    mask_cache()
        .lock()
        .expect("mask cache poisoned")
        .insert(key, Arc::clone(&mask));
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ScenarioConfig;

    fn scene() -> (ScenarioConfig, World) {
        let cfg = ScenarioConfig::default();
        let world = World::new(cfg.object.pose(), cfg.object.extents());
        (cfg, world)
    }

    #[test]
    fn ground_depth_matches_flat_floor() {
        let (cfg, _) = scene();
        let cam = CameraSensor::new(&cfg.front_camera);
        // principal ray: pitched 15 degrees down from 0.75 m
        let pitch = cfg.front_camera.mount.pitch_deg.to_radians();
        let expected = 0.75 / pitch.sin();
        let k = cam.intrinsics;
        let got = f64::from(cam.ground_depth().get(k.cu as usize, k.cv as usize));
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
        // rows above the horizon see nothing
        assert_eq!(cam.ground_depth().get(640, 0), 0.0);
    }

    #[test]
    fn region_path_matches_full_frame() {
        let (cfg, world) = scene();
        let cam = CameraSensor::new(&cfg.front_camera);
        let lidar = LidarSensor::new(&cfg.lidar);
        let mask = cached_blind_spot_mask(&cam.intrinsics, &lidar.camera_from_lidar(&cam), &cfg.blind_spot);
        let k = cam.intrinsics;
        for (x, y, yaw) in [(3.0, 0.0, 0.0), (4.2, 0.3, 0.2), (1.0, -0.5, -0.1)] {
            let robot = RigidTransform::planar(x, y, yaw);
            let full = crate::fusion::fuse_depth(
                &lidar.depth_in_camera(&robot, &world, &cam),
                &cam.render(&robot, &world),
                &mask,
            )
            .unwrap();
            let region = Region::covering(
                &BoundingBox::new(500.3, 250.6, 801.2, 640.4),
                &PixelPoint::new(640.0, 450.0),
                k.width,
                k.height,
            );
            let mut camera = DepthImage::new(k.width, k.height);
            let mut from_lidar = DepthImage::new(k.width, k.height);
            // stale contents outside the region must not leak in
            camera.data_mut().fill(-1.0);
            from_lidar.data_mut().fill(-1.0);
            cam.render_region(&robot, &world, &region, &mut camera);
            lidar.depth_in_camera_region(&robot, &world, &cam, &region, &mut from_lidar);
            fuse_region(&from_lidar, &mut camera, &mask, &region);
            for v in region.v_lo..=region.v_hi {
                for u in region.u_lo..=region.u_hi {
                    assert_eq!(camera.get(u, v).to_bits(), full.get(u, v).to_bits(), "({u},{v})");
                }
            }
            assert_eq!(camera.get(region.u_hi + 1, region.v_lo), -1.0);
        }
    }

    #[test]
    fn region_covering_examples() {
        let r = Region::covering(&BoundingBox::new(10.4, 20.6, 30.5, 40.0), &PixelPoint::new(25.0, 25.0), 64, 48);
        assert_eq!(r, Region { u_lo: 10, u_hi: 31, v_lo: 21, v_hi: 40 });
        let r = Region::covering(&BoundingBox::new(-5.0, 2.0, 70.0, 3.0), &PixelPoint::new(5.0, 47.2), 64, 48);
        assert_eq!(r, Region { u_lo: 0, u_hi: 63, v_lo: 2, v_hi: 47 });
    }

    #[test]
    fn rendered_object_is_nearer_than_ground() {
        let (cfg, world) = scene();
        let cam = CameraSensor::new(&cfg.front_camera);
        let robot = RigidTransform::planar(3.0, 0.0, 0.0);
        let img = cam.render(&robot, &world);
        let cam_pose = cam.pose_in_world(&robot);
        let hull = projected_hull(
            &cam_pose.inverse().compose(world.object_pose()),
            &world.extents(),
            &cam.intrinsics,
        )
        .unwrap();
        let c = hull.center();
        let d = f64::from(img.get(c.u as usize, c.v as usize));
        // object front face sits 6 - 0.125 - 3.8 = 2.075 m ahead of the camera
        assert!(d > 2.0 && d < 2.4, "{d}");
        assert!(d < f64::from(cam.ground_depth().get(c.u as usize, c.v as usize)) || cam.ground_depth().get(c.u as usize, c.v as usize) == 0.0);
    }

    #[test]
    fn lidar_ground_ranges() {
        let (cfg, world) = scene();
        let lidar = LidarSensor::new(&cfg.lidar);
        let ri = lidar.scan(&RigidTransform::planar(-20.0, 0.0, 0.0), &world);
        // lowest beam
        let expected = 1.10 / 15f64.to_radians().sin();
        assert!((f64::from(ri.get(0, 0)) - expected).abs() < 1e-4);
        // upward beams have no return
        assert_eq!(ri.get(ri.rows() - 1, 10), 0.0);
    }

    #[test]
    fn lidar_sees_object_ahead() {
        let (cfg, world) = scene();
        let lidar = LidarSensor::new(&cfg.lidar);
        let ri = lidar.scan(&RigidTransform::identity(), &world);
        let centre = ri.cols / 2;
        // the box front face is 6 - 0.125 - 0.5 = 5.375 m from the LiDAR
        let hits = (0..ri.rows())
            .filter(|&r| {
                let v = f64::from(ri.get(r, centre));
                v > 5.3 && v < 5.7
            })
            .count();
        assert!(hits >= 2, "{hits}");
        let img = lidar.depth_in_camera(
            &RigidTransform::identity(),
            &world,
            &CameraSensor::new(&cfg.front_camera),
        );
        assert!(img.count_nonzero() > 1000);
    }

    #[test]
    fn mask_cache_returns_same_mask() {
        let (cfg, _) = scene();
        let cam = CameraSensor::new(&cfg.front_camera);
        let lidar = LidarSensor::new(&cfg.lidar);
        let params = BlindSpotParams {
            step: 0.01,
            ..cfg.blind_spot
        };
        let a = cached_blind_spot_mask(&cam.intrinsics, &lidar.camera_from_lidar(&cam), &params);
        let b = cached_blind_spot_mask(&cam.intrinsics, &lidar.camera_from_lidar(&cam), &params);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(
            *a,
            blind_spot_mask(&cam.intrinsics, &lidar.camera_from_lidar(&cam), &params)
        );
    }
}
