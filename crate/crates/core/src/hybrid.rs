//! Switching law, output smoothing, target memory and the placement state
//! machine.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::perception::ObjectEstimate;
use crate::vehicle::Twist2;

/// Ground-plane point `(x, y)` in the world frame.
pub type TargetPoint = Vector2<f64>;

/// Picks the visual-servoing output while the object is detected and the
/// kinematic output otherwise. `kin_out` is `None` until a target has been
/// memorized.
pub fn hybrid_law(detected: bool, vs_out: Twist2, kin_out: Option<Twist2>) -> Result<Twist2> {
    if detected {
        Ok(vs_out)
    } else {
        kin_out.ok_or(Error::NoTargetYet)
    }
}

/// `(1 - (V_n - V_prev)) ⊙ V_n`, elementwise on the raw SI values.
pub fn smooth(v_n: Twist2, v_prev: Twist2) -> Twist2 {
    Twist2::new(
        (1.0 - (v_n.v - v_prev.v)) * v_n.v,
        (1.0 - (v_n.omega - v_prev.omega)) * v_n.omega,
    )
}

/// Last known object position on the ground plane.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TargetMemory {
    target: Option<TargetPoint>,
}

impl TargetMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> Option<TargetPoint> {
        self.target
    }

    /// Moves the camera-frame estimate into the world, drops its height and
    /// overwrites the stored target.
    pub fn update_target(
        &mut self,
        est: &ObjectEstimate,
        camera_pose_world: &RigidTransform,
    ) -> TargetPoint {
        let p: Vector3<f64> = camera_pose_world.transform_point(&est.position);
        let t = Vector2::new(p.x, p.y);
        self.target = Some(t);
        t
    }

    pub fn set(&mut self, t: TargetPoint) {
        self.target = Some(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementStage {
    Forward,
    Rotate,
    Backward,
    Done,
}

impl PlacementStage {
    /// 1, 2, 3 for the active stages and 4 for `Done`.
    pub fn id(self) -> u8 {
        match self {
            Self::Forward => 1,
            Self::Rotate => 2,
            Self::Backward => 3,
            Self::Done => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Self::Forward),
            2 => Some(Self::Rotate),
            3 => Some(Self::Backward),
            4 => Some(Self::Done),
            _ => None,
        }
    }
}

/// Which stages a run visits. `Full` walks Forward, Rotate, Backward; the
/// single-stage tasks finish after their one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    Full,
    Forward,
    Backward,
}

impl TaskKind {
    pub fn first_stage(self) -> PlacementStage {
        match self {
            Self::Full | Self::Forward => PlacementStage::Forward,
            Self::Backward => PlacementStage::Backward,
        }
    }

    pub fn successor(self, stage: PlacementStage) -> PlacementStage {
        use PlacementStage::*;
        match (self, stage) {
            (Self::Full, Forward) => Rotate,
            (Self::Full, Rotate) => Backward,
            _ => Done,
        }
    }

    pub fn stages(self) -> &'static [PlacementStage] {
        use PlacementStage::*;
        match self {
            Self::Full => &[Forward, Rotate, Backward, Done],
            Self::Forward => &[Forward, Done],
            Self::Backward => &[Backward, Done],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementState {
    pub stage: PlacementStage,
    pub entered_at: usize,
}

impl PlacementState {
    pub fn start(task: TaskKind) -> Self {
        Self {
            stage: task.first_stage(),
            entered_at: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchThresholds {
    /// px
    pub feature_tol: f64,
    /// m
    pub position_tol: f64,
}

impl Default for SwitchThresholds {
    fn default() -> Self {
        Self {
            feature_tol: 2.0,
            position_tol: 0.01,
        }
    }
}

impl SwitchThresholds {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.feature_tol > 0.0 && self.position_tol > 0.0 {
            Ok(())
        } else {
            Err("switch thresholds must be positive".into())
        }
    }
}

/// True when every component lies strictly inside `(-tol, tol)`.
pub fn within(err: &[f64], tol: f64) -> bool {
    !err.is_empty() && err.iter().all(|e| e.abs() < tol)
}

/// Advances the machine by one tick. Missing errors (no detection, no
/// waypoint) never trigger a transition.
pub fn placement_step(
    ps: PlacementState,
    task: TaskKind,
    feature_err: Option<&[f64]>,
    pos_err: Option<&Vector2<f64>>,
    thresholds: &SwitchThresholds,
    tick: usize,
) -> PlacementState {
    let ready = match ps.stage {
        PlacementStage::Forward | PlacementStage::Backward => {
            feature_err.is_some_and(|e| within(e, thresholds.feature_tol))
        }
        PlacementStage::Rotate => {
            pos_err.is_some_and(|e| within(e.as_slice(), thresholds.position_tol))
        }
        PlacementStage::Done => false,
    };
    if ready {
        PlacementState {
            stage: task.successor(ps.stage),
            entered_at: tick,
        }
    } else {
        ps
    }
}
