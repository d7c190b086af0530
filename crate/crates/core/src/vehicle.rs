//! Car-like (bicycle) kinematic plant.
//!
//! The reference point of [`VehicleState`] is the rear axle. The control
//! point used by the position controller sits `d` ahead of it, on the front
//! axle, so one length serves as both the control-point offset and the
//! wheelbase.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;

/// Planar pose in the world (odometry) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vector2<f64> {
        Vector2::new(self.theta.cos(), self.theta.sin())
    }

    /// Point `d` metres ahead of the rear axle.
    pub fn control_point(&self, d: f64) -> Vector2<f64> {
        self.position() + d * self.heading()
    }
}

/// Actuation: linear speed (m/s) and front-wheel steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleCommand {
    pub speed: f64,
    pub steering: f64,
}

impl VehicleCommand {
    pub fn new(speed: f64, steering: f64) -> Self {
        Self { speed, steering }
    }
}

/// Body velocities `(v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2 {
    pub v: f64,
    pub omega: f64,
}

impl Twist2 {
    pub const ZERO: Twist2 = Twist2 { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.v, self.omega)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.v * k, self.omega * k)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Front-to-rear axle distance (m).
    pub wheelbase: f64,
    pub max_speed: f64,
    pub max_steering: f64,
    /// Floor on |v| when converting a twist to a steering angle.
    #[serde(default = "default_speed_floor")]
    pub speed_floor: f64,
}

fn default_speed_floor() -> f64 {
    1e-6
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.7,
            max_speed: 0.5,
            max_steering: 0.44,
            speed_floor: default_speed_floor(),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wheelbase > 0.0) {
            return Err("wheelbase must be positive".into());
        }
        if !(self.speed_floor > 0.0) {
            return Err("speed_floor must be positive".into());
        }
        if !(self.max_speed > 0.0 && self.max_steering > 0.0) {
            return Err("actuation limits must be positive".into());
        }
        Ok(())
    }

    /// Largest yaw rate the saturated actuators can produce.
    pub fn max_yaw_rate(&self) -> f64 {
        self.max_speed * self.max_steering.tan() / self.wheelbase
    }
}

/// Maps `(v, omega)` to the world-frame velocity of the control point.
pub fn body_jacobian(theta: f64, d: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -d * s, s, d * c)
}

/// Closed-form inverse of [`body_jacobian`]; `det = d`.
pub fn body_jacobian_inverse(theta: f64, d: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s / d, c / d)
}

/// One explicit-Euler step of the bicycle model.
pub fn integrate(
    s: &VehicleState,
    cmd: &VehicleCommand,
    dt: f64,
    params: &VehicleParams,
) -> VehicleState {
    let omega = cmd.speed * cmd.steering.tan() / params.wheelbase;
    let (sin, cos) = s.theta.sin_cos();
    VehicleState {
        x: s.x + cmd.speed * cos * dt,
        y: s.y + cmd.speed * sin * dt,
        theta: wrap_angle(s.theta + omega * dt),
    }
}

/// `psi = atan(d * omega / v')` with `|v'| >= speed_floor`, clamped to the
/// steering limit. `v == 0` is treated as `+speed_floor`.
pub fn steering_from_twist(t: &Twist2, params: &VehicleParams) -> f64 {
    let floor = params.speed_floor;
    let v = if t.v < 0.0 {
        t.v.min(-floor)
    } else {
        t.v.max(floor)
    };
    let psi = (params.wheelbase * t.omega / v).atan();
    psi.clamp(-params.max_steering, params.max_steering)
}

pub fn saturate(cmd: &VehicleCommand, params: &VehicleParams) -> VehicleCommand {
    VehicleCommand {
        speed: cmd.speed.clamp(-params.max_speed, params.max_speed),
        steering: cmd.steering.clamp(-params.max_steering, params.max_steering),
    }
}

/// Twist-to-actuator conversion used by the controllers: steering from the
/// twist, then saturation.
pub fn command_from_twist(t: &Twist2, params: &VehicleParams) -> VehicleCommand {
    let steering = steering_from_twist(t, params);
    saturate(&VehicleCommand::new(t.v, steering), params)
}
