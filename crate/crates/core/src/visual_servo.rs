//! Desired-feature estimation and the image-based control law, both in camera
//! space and mapped onto the car's `(v, omega)`.

use nalgebra::{DMatrix, DVector, Matrix6x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::camera::{interaction_matrix, CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::fusion::DepthImage;
use crate::geometry::{Twist6, VelocityAdjoint};
use crate::linalg::pinv;
use crate::perception::BoundingBox;
use crate::vehicle::Twist2;

/// Four box corners in [`BoundingBox::corners`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureSet(pub [PixelPoint; 4]);

impl FeatureSet {
    pub fn points(&self) -> &[PixelPoint; 4] {
        &self.0
    }

    /// `[u0, v0, u1, v1, ...]`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(8, self.0.iter().flat_map(|p| [p.u, p.v]))
    }

    /// Componentwise `self - other`.
    pub fn error(&self, other: &FeatureSet) -> DVector<f64> {
        self.to_vector() - other.to_vector()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|p| p.u.is_finite() && p.v.is_finite())
    }
}

/// Positive per-axis gains on the camera twist. Five entries are accepted
/// and expanded to six by repeating the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServoGains(pub Vec<f64>);

impl ServoGains {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.0.len() == 5 || self.0.len() == 6) {
            return Err(format!("expected 5 or 6 gains, got {}", self.0.len()));
        }
        if self.0.iter().any(|g| !(*g > 0.0)) {
            return Err("servo gains must be positive".into());
        }
        Ok(())
    }

    pub fn expanded(&self) -> [f64; 6] {
        let mut g = [0.0; 6];
        for (i, slot) in g.iter_mut().enumerate() {
            *slot = *self.0.get(i).or(self.0.last()).unwrap_or(&1.0);
        }
        g
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|g| g * k).collect())
    }

    /// Gains on `(v, omega)`: the entries of the camera-twist gain vector
    /// that line up with forward speed (index 0) and yaw rate (index 5).
    pub fn robot_gains(&self) -> Vector2<f64> {
        let g = self.expanded();
        Vector2::new(g[0], g[5])
    }
}

/// Where the object should end up in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredPlacement {
    /// Desired box centre (px).
    pub center: PixelPoint,
    /// Depth used when the depth image has no value at `center` (m).
    pub fallback_depth: f64,
}

pub fn current_features(bb: &BoundingBox) -> FeatureSet {
    FeatureSet(bb.corners())
}

/// Desired corners: the current box rescaled by `k = z_o / z_d` and
/// re-centred on the desired centre, with `z_d` read from `depth` at that
/// centre.
pub fn desired_features(
    bb: &BoundingBox,
    z_o: f64,
    placement: &DesiredPlacement,
    depth: &DepthImage,
) -> Result<FeatureSet> {
    if !(z_o > 0.0) {
        return Err(Error::NonPositiveDepth(z_o));
    }
    let z_d = desired_depth(placement, depth);
    if !(z_d > 0.0) {
        return Err(Error::NonPositiveDepth(z_d));
    }
    let k = z_o / z_d;
    let (half_w, half_h) = (0.5 * bb.width() * k, 0.5 * bb.height() * k);
    let c = placement.center;
    Ok(current_features(&BoundingBox::new(
        c.u - half_w,
        c.v - half_h,
        c.u + half_w,
        c.v + half_h,
    )))
}

/// Depth at the desired centre, or the placement fallback when the image has
/// no value there.
pub fn desired_depth(placement: &DesiredPlacement, depth: &DepthImage) -> f64 {
    depth_at(depth, &placement.center)
        .filter(|d| *d > 0.0)
        .unwrap_or(placement.fallback_depth)
}

fn depth_at(depth: &DepthImage, p: &PixelPoint) -> Option<f64> {
    let (u, v) = (p.u.round(), p.v.round());
    if u < 0.0 || v < 0.0 || u >= depth.width() as f64 || v >= depth.height() as f64 {
        return None;
    }
    Some(f64::from(depth.get(u as usize, v as usize)))
}

/// Camera twist `-Lambda * pinv(L) * (f - f_d)`.
pub fn camera_twist(
    f: &FeatureSet,
    f_d: &FeatureSet,
    z_o: f64,
    k: &CameraIntrinsics,
    gains: &ServoGains,
) -> Result<Twist6> {
    let l = interaction_matrix(f.points(), z_o, k)?;
    let (l_pinv, _) = pinv(&l);
    let v = &l_pinv * f.error(f_d);
    let g = gains.expanded();
    Ok(Twist6::from_fn(|i, _| -g[i] * v[i]))
}

/// How `(v, omega)` is lifted into a 6-D twist before the camera adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobotJacobianMode {
    /// Body twist `[v, 0, 0, 0, 0, omega]` in the robot frame.
    #[default]
    Body,
    /// Planar Jacobian rows in the first two slots and yaw rate in the last,
    /// using the world-frame planar Jacobian of the control point.
    WorldPlanar,
}

/// 6x2 lift of `(v, omega)` into a robot-frame twist.
pub fn robot_jacobian(mode: RobotJacobianMode, theta: f64, d: f64) -> Matrix6x2<f64> {
    let mut j = Matrix6x2::zeros();
    match mode {
        RobotJacobianMode::Body => {
            j[(0, 0)] = 1.0;
            j[(5, 1)] = 1.0;
        }
        RobotJacobianMode::WorldPlanar => {
            let (s, c) = theta.sin_cos();
            j[(0, 0)] = c;
            j[(0, 1)] = -d * s;
            j[(1, 0)] = s;
            j[(1, 1)] = d * c;
            j[(5, 1)] = 1.0;
        }
    }
    j
}

/// Inputs to [`robot_velocity_vs`] that describe the camera and vehicle.
#[derive(Debug, Clone, Copy)]
pub struct ServoGeometry<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    /// Maps robot-frame twists into the camera frame.
    pub camera_from_robot: &'a VelocityAdjoint,
    pub heading: f64,
    pub wheelbase: f64,
    pub jacobian_mode: RobotJacobianMode,
}

/// Robot velocities `-G * pinv(L * T * J_r) * (f - f_d)`, with `G` the
/// `(v, omega)` gains from [`ServoGains::robot_gains`].
pub fn robot_velocity_vs(
    f: &FeatureSet,
    f_d: &FeatureSet,
    z_o: f64,
    gains: &ServoGains,
    geom: &ServoGeometry<'_>,
) -> Result<Twist2> {
    let l = interaction_matrix(f.points(), z_o, geom.intrinsics)?;
    let combined = combined_jacobian(&l, geom);
    let (p, rank) = pinv(&combined);
    if rank < 2 {
        return Err(Error::SingularCombined);
    }
    let v = p * f.error(f_d);
    let g = gains.robot_gains();
    Ok(Twist2::new(-g.x * v[0], -g.y * v[1]))
}

/// `L * T * J_r`, the 2n x 2 map from `(v, omega)` to feature velocities.
pub fn combined_jacobian(l: &DMatrix<f64>, geom: &ServoGeometry<'_>) -> DMatrix<f64> {
    let j = robot_jacobian(geom.jacobian_mode, geom.heading, geom.wheelbase);
    let tj = geom.camera_from_robot.matrix() * j;
    l * DMatrix::from_column_slice(6, 2, tj.as_slice())
}
