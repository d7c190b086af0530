//! Synthetic object detector plus bounding-box depth and 3-D localization.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::fusion::DepthImage;
use crate::geometry::RigidTransform;

/// Axis-aligned box in pixel coordinates. `(u0, v0)` is the corner with the
/// smaller coordinates, `(u2, v2)` the opposite one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u0: f64,
    pub v0: f64,
    pub u2: f64,
    pub v2: f64,
}

impl BoundingBox {
    pub fn new(u0: f64, v0: f64, u2: f64, v2: f64) -> Self {
        Self { u0, v0, u2, v2 }
    }

    pub fn width(&self) -> f64 {
        self.u2 - self.u0
    }

    pub fn height(&self) -> f64 {
        self.v2 - self.v0
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(0.5 * (self.u0 + self.u2), 0.5 * (self.v0 + self.v2))
    }

    /// Corners in feature order `(u0,v0), (u1,v1), (u2,v2), (u3,v3)` where
    /// `u1 = u0`, `v1 = v2`, `u3 = u2`, `v3 = v0`.
    pub fn corners(&self) -> [PixelPoint; 4] {
        [
            PixelPoint::new(self.u0, self.v0),
            PixelPoint::new(self.u0, self.v2),
            PixelPoint::new(self.u2, self.v2),
            PixelPoint::new(self.u2, self.v0),
        ]
    }

    pub fn is_valid(&self, k: &CameraIntrinsics) -> bool {
        self.u0 < self.u2
            && self.v0 < self.v2
            && self.u0 >= 0.0
            && self.v0 >= 0.0
            && self.u2 < k.width as f64
            && self.v2 < k.height as f64
    }

    /// Strict containment of `other` inside `self`.
    pub fn strictly_contains(&self, other: &BoundingBox) -> bool {
        other.u0 > self.u0 && other.v0 > self.v0 && other.u2 < self.u2 && other.v2 < self.v2
    }
}

/// Per-frame detector output. `bbox` is `None` when nothing was detected.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Detection {
    pub bbox: Option<BoundingBox>,
}

impl Detection {
    pub fn missed() -> Self {
        Self { bbox: None }
    }

    pub fn hit(bbox: BoundingBox) -> Self {
        Self { bbox: Some(bbox) }
    }

    pub fn detected(&self) -> bool {
        self.bbox.is_some()
    }
}

/// Object position in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectEstimate {
    pub position: Vector3<f64>,
}

impl ObjectEstimate {
    pub fn depth(&self) -> f64 {
        self.position.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Per-frame probability of a missed detection.
    pub p_miss: f64,
    /// Gaussian noise on each box edge (px).
    pub pixel_noise_sigma: f64,
    /// Time windows `[start, end]` (s) during which the object is occluded.
    #[serde(default)]
    pub occlusion_intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            p_miss: 0.0,
            pixel_noise_sigma: 0.0,
            occlusion_intervals: Vec::new(),
            seed: 0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_miss) {
            return Err(format!("p_miss must lie in [0, 1], got {}", self.p_miss));
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return Err("pixel_noise_sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn occluded_at(&self, t: f64) -> bool {
        self.occlusion_intervals
            .iter()
            .any(|[a, b]| t >= *a && t <= *b)
    }
}

/// Projects a box-shaped object into the image and emulates detector
/// failures. Owns one seeded random stream; every call consumes the same
/// number of draws so traces line up across runs that share a seed.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    model: DetectorModel,
    rng: ChaCha8Rng,
}

impl SyntheticDetector {
    pub fn new(model: DetectorModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Self { model, rng }
    }

    pub fn model(&self) -> &DetectorModel {
        &self.model
    }

    /// `object_pose_world` places the box centre; `extents` are full side
    /// lengths along the box axes. `camera_pose_world` is the optical frame.
    pub fn detect(
        &mut self,
        object_pose_world: &RigidTransform,
        extents: &Vector3<f64>,
        camera_pose_world: &RigidTransform,
        k: &CameraIntrinsics,
        t: f64,
    ) -> Detection {
        let trial: f64 = self.rng.gen();
        let noise: [f64; 4] = std::array::from_fn(|_| self.rng.sample::<f64, _>(StandardNormal));

        if self.model.occluded_at(t) || trial < self.model.p_miss {
            return Detection::missed();
        }
        let cam_from_object = camera_pose_world.inverse().compose(object_pose_world);
        let Some(hull) = projected_hull(&cam_from_object, extents, k) else {
            return Detection::missed();
        };
        let s = self.model.pixel_noise_sigma;
        let (w_max, h_max) = (k.width as f64 - 1.0, k.height as f64 - 1.0);
        let bb = BoundingBox::new(
            (hull.u0 + s * noise[0]).clamp(0.0, w_max),
            (hull.v0 + s * noise[1]).clamp(0.0, h_max),
            (hull.u2 + s * noise[2]).clamp(0.0, w_max),
            (hull.v2 + s * noise[3]).clamp(0.0, h_max),
        );
        if bb.u0 < bb.u2 && bb.v0 < bb.v2 {
            Detection::hit(bb)
        } else {
            Detection::missed()
        }
    }
}

/// Axis-aligned hull of the 8 projected box corners, clipped to the image.
/// `None` when the box centre or any corner is behind the camera, or the hull
/// misses the frame.
pub fn projected_hull(
    cam_from_object: &RigidTransform,
    extents: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> Option<BoundingBox> {
    if !(cam_from_object.translation().z > 0.0) {
        return None;
    }
    let half = extents * 0.5;
    let mut lo = PixelPoint::new(f64::INFINITY, f64::INFINITY);
    let mut hi = PixelPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..8 {
        let corner = Vector3::new(
            if i & 1 == 0 { -half.x } else { half.x },
            if i & 2 == 0 { -half.y } else { half.y },
            if i & 4 == 0 { -half.z } else { half.z },
        );
        let p = project(&cam_from_object.transform_point(&corner), k).ok()?;
        lo.u = lo.u.min(p.u);
        lo.v = lo.v.min(p.v);
        hi.u = hi.u.max(p.u);
        hi.v = hi.v.max(p.v);
    }
    let (w_max, h_max) = (k.width as f64 - 1.0, k.height as f64 - 1.0);
    if hi.u < 0.0 || hi.v < 0.0 || lo.u > w_max || lo.v > h_max {
        return None;
    }
    Some(BoundingBox::new(
        lo.u.max(0.0),
        lo.v.max(0.0),
        hi.u.min(w_max),
        hi.v.min(h_max),
    ))
}

/// Integer-valued box 40 % smaller than `bb`, inset by 20 % of the span on
/// every side and rounded half-to-even.
pub fn shrink_bbox(bb: &BoundingBox) -> Result<BoundingBox> {
    // 0.4 * (0.5 * (b - a)) + a == (4a + b) / 5, written so ties stay exact
    let inset = |a: f64, b: f64| ((4.0 * a + b) / 5.0).round_ties_even();
    let u_min = inset(bb.u0, bb.u2);
    let u_max = inset(bb.u2, bb.u0);
    let v_min = inset(bb.v0, bb.v2);
    let v_max = inset(bb.v2, bb.v0);
    if u_min >= u_max || v_min >= v_max {
        return Err(Error::EmptyBox);
    }
    Ok(BoundingBox::new(u_min, v_min, u_max, v_max))
}

/// Mean of the non-zero depths over the inclusive pixel range of `bb`
/// (clipped to the image).
pub fn object_depth(bb: &BoundingBox, depth: &DepthImage) -> Result<f64> {
    let (w, h) = (depth.width() as i64, depth.height() as i64);
    let u_lo = (bb.u0.round() as i64).max(0);
    let u_hi = (bb.u2.round() as i64).min(w - 1);
    let v_lo = (bb.v0.round() as i64).max(0);
    let v_hi = (bb.v2.round() as i64).min(h - 1);
    let mut sum = 0.0f64;
    let mut n = 0usize;
    if u_lo <= u_hi {
        for v in v_lo..=v_hi {
            let row = &depth.data()[(v * w) as usize..((v + 1) * w) as usize];
            for &d in &row[u_lo as usize..=u_hi as usize] {
                if d != 0.0 {
                    sum += f64::from(d);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::NoValidDepth);
    }
    Ok(sum / n as f64)
}

/// Back-projects the box centre with depth `d_o` taken as the optical-axis
/// depth.
pub fn localize(center: &PixelPoint, d_o: f64, k: &CameraIntrinsics) -> Result<ObjectEstimate> {
    if !(d_o > 0.0) {
        return Err(Error::NonPositiveDepth(d_o));
    }
    Ok(ObjectEstimate {
        position: Vector3::new(
            (center.u - k.cu) * d_o / k.fu,
            (center.v - k.cv) * d_o / k.fv,
            d_o,
        ),
    })
}

/// Converts a Euclidean range measured along the ray through `center` into
/// optical-axis depth.
pub fn range_to_axis_depth(center: &PixelPoint, range: f64, k: &CameraIntrinsics) -> f64 {
    range / k.ray(center.u, center.v).norm()
}
