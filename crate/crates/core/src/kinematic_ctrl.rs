//! Position-based fallback controller on the front-axle control point.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::vehicle::{body_jacobian_inverse, Twist2};

/// Per-axis gains applied to the saturated world-frame position error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicGains(pub [f64; 2]);

impl KinematicGains {
    pub fn validate(&self) -> Result<(), String> {
        if self.0.iter().all(|k| *k > 0.0) {
            Ok(())
        } else {
            Err("kinematic gains must be positive".into())
        }
    }
}

/// `h_d - h`, the world-frame vector from the control point to its goal.
pub fn position_error(h: &Vector2<f64>, h_d: &Vector2<f64>) -> Vector2<f64> {
    h_d - h
}

/// Error that brings the control point to `standoff` metres from `object`
/// along the current line of sight. Zero when the point already sits on the
/// circle or on top of the object.
pub fn standoff_error(h: &Vector2<f64>, object: &Vector2<f64>, standoff: f64) -> Vector2<f64> {
    let los = object - h;
    let dist = los.norm();
    if dist == 0.0 {
        return Vector2::zeros();
    }
    los * ((dist - standoff) / dist)
}

/// `J_b^-1 * (k ⊙ tanh(err))`.
pub fn robot_velocity_kin(err: &Vector2<f64>, theta: f64, d: f64, gains: &KinematicGains) -> Twist2 {
    let shaped = Vector2::new(gains.0[0] * err.x.tanh(), gains.0[1] * err.y.tanh());
    Twist2::from_vector(&(body_jacobian_inverse(theta, d) * shaped))
}
