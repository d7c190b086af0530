//! Rigid transforms, skew matrices and the 6x6 twist adjoint.
//!
//! Column vectors throughout. Twists are ordered `[vx, vy, vz, wx, wy, wz]`.

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Twist6 = Vector6<f64>;

const ORTHO_TOL: f64 = 1e-9;

/// Pose of frame B expressed in frame A, `p_a = R p_b + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation built from a unit quaternion / axis-angle is orthonormal by construction.
    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation about the world z axis followed by a translation.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::from_rotation(
            Rotation3::from_axis_angle(&Vector3::z_axis(), yaw),
            Vector3::new(x, y, 0.0),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self * other`: maps points of `other`'s source frame into `self`'s target frame.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// `[t]x` such that `skew(t) * v == t.cross(v)`.
pub fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// 6x6 matrix `[[R, [t]x R], [0, R]]`.
///
/// For `T` the pose of frame B in frame A, this maps a twist expressed in B
/// to the same rigid motion expressed in A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAdjoint(pub Matrix6<f64>);

impl VelocityAdjoint {
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn apply(&self, twist: &Twist6) -> Twist6 {
        self.0 * twist
    }
}

pub fn velocity_adjoint(t: &RigidTransform) -> VelocityAdjoint {
    let r = t.rotation;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&t.translation) * r));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    VelocityAdjoint(m)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
