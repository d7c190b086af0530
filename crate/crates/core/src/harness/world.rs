use nalgebra::Vector3;

use crate::geometry::RigidTransform;

/// Flat ground at world `z = 0` plus one box obstacle.
#[derive(Debug, Clone)]
pub struct World {
    object_pose: RigidTransform,
    object_inv: RigidTransform,
    half: Vector3<f64>,
}

impl World {
    pub fn new(object_pose: RigidTransform, extents: Vector3<f64>) -> Self {
        Self {
            object_inv: object_pose.inverse(),
            object_pose,
            half: extents * 0.5,
        }
    }

    pub fn object_pose(&self) -> &RigidTransform {
        &self.object_pose
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.half * 2.0
    }

    /// Moves a ray expressed in `frame` (given as world-from-frame) into the
    /// object frame, so repeated casts from one sensor stay cheap.
    pub fn object_from(&self, frame: &RigidTransform) -> RigidTransform {
        self.object_inv.compose(frame)
    }

    /// Entry parameter of the ray `origin + t * dir` (object-frame
    /// quantities) into the box, if the box is hit in front of the origin.
    pub fn box_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i].abs() > self.half[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let a = (-self.half[i] - origin[i]) * inv;
            let b = (self.half[i] - origin[i]) * inv;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
        (t_near > 0.0).then_some(t_near)
    }

    /// World-frame ray cast against the box.
    pub fn ray_object(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.object_inv.transform_point(origin);
        let d = self.object_inv.transform_vector(dir);
        self.box_hit(&o, &d)
    }
}

/// Parameter at which `origin + t * dir` meets the ground plane `z = 0`.
pub fn ray_ground(origin_z: f64, dir_z: f64) -> Option<f64> {
    if dir_z < 0.0 && origin_z > 0.0 {
        Some(-origin_z / dir_z)
    } else {
        None
    }
}
