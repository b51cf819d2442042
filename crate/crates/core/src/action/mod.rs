//! Simulated manipulation: 7-component delta actions, a kinematic world
//! with a latch-style gripper, goal predicates, policies and the fixed-rate
//! control loop.

mod control;
mod policy;
mod task;
mod world;

pub use control::{run_control_loop, ControlConfig, ControlError, LoopMode, DEFAULT_HZ};
pub use policy::{predict_action, FailureInjection, NullPolicy, Policy, PolicyError, ScriptedExpert};
pub use task::{GoalPredicate, GoalTracker, TaskSpec, CUT_CONTACT_M, CUT_MAX_GRIP, CUT_RETRACT_M, DEFAULT_MAX_STEPS};
pub use world::{apply_action, ObjectSummary, Observation, SimObject, SimWorld, GRASP_RANGE_M, GRIP_LATCH};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3d;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("action must have exactly 7 components, got {0}")]
    Arity(usize),
    #[error("action component {index} is not finite")]
    NonFinite { index: usize },
    #[error("action component {index} = {value} exceeds limit {limit}")]
    OverMagnitude { index: usize, value: f64, limit: f64 },
}

/// Per-component magnitude limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionLimits {
    /// Meters per step for dx, dy, dz.
    pub max_translation: f64,
    /// Radians per step for droll, dpitch, dyaw.
    pub max_rotation: f64,
    pub max_grip: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self { max_translation: 0.02, max_rotation: 0.1, max_grip: 1.0 }
    }
}

impl ActionLimits {
    pub fn limit(&self, index: usize) -> f64 {
        match index {
            0..=2 => self.max_translation,
            3..=5 => self.max_rotation,
            _ => self.max_grip,
        }
    }
}

/// One control-step command: translation (m), rotation (rad), grip delta.
/// Serialized as a 7-element array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 7]", into = "[f64; 7]")]
pub struct ActionVector7 {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub droll: f64,
    pub dpitch: f64,
    pub dyaw: f64,
    pub dgrip: f64,
}

impl From<[f64; 7]> for ActionVector7 {
    fn from(a: [f64; 7]) -> Self {
        Self { dx: a[0], dy: a[1], dz: a[2], droll: a[3], dpitch: a[4], dyaw: a[5], dgrip: a[6] }
    }
}

impl From<ActionVector7> for [f64; 7] {
    fn from(a: ActionVector7) -> Self {
        a.to_array()
    }
}

impl ActionVector7 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw, self.dgrip]
    }

    /// Checks arity and finiteness; magnitudes are left to the caller.
    pub fn from_slice(values: &[f64]) -> Result<Self, ActionError> {
        let arr: [f64; 7] = values.try_into().map_err(|_| ActionError::Arity(values.len()))?;
        if let Some(index) = arr.iter().position(|v| !v.is_finite()) {
            return Err(ActionError::NonFinite { index });
        }
        Ok(arr.into())
    }

    pub fn translation(&self) -> Vec3d {
        Vec3d::new(self.dx, self.dy, self.dz)
    }

    pub fn rotation(&self) -> Vec3d {
        Vec3d::new(self.droll, self.dpitch, self.dyaw)
    }

    pub fn validate(&self, limits: &ActionLimits) -> Result<(), ActionError> {
        for (index, value) in self.to_array().into_iter().enumerate() {
            if !value.is_finite() {
                return Err(ActionError::NonFinite { index });
            }
            let limit = limits.limit(index);
            if value.abs() > limit {
                return Err(ActionError::OverMagnitude { index, value, limit });
            }
        }
        Ok(())
    }

    /// Clamps each component into `[-limit, limit]`. Finite inputs only.
    pub fn clamped(&self, limits: &ActionLimits) -> Self {
        let mut a = self.to_array();
        for (i, v) in a.iter_mut().enumerate() {
            let l = limits.limit(i);
            *v = v.clamp(-l, l);
        }
        a.into()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// End-effector pose and gripper opening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorState {
    /// Meters, workspace frame.
    pub position: Vec3d,
    /// Roll, pitch, yaw in radians, each in `(-pi, pi]`.
    pub orientation: Vec3d,
    /// 0 open, 1 closed.
    pub grip: f64,
}

impl ManipulatorState {
    /// Open gripper, level orientation, 0.3 m above the workspace origin.
    pub fn home() -> Self {
        Self { position: Vec3d::new(0.0, 0.0, 0.3), orientation: Vec3d::zero(), grip: 0.0 }
    }

    /// `[x, y, z, roll, pitch, yaw, grip]`.
    pub fn to_array(&self) -> [f64; 7] {
        let (p, o) = (self.position, self.orientation);
        [p.x, p.y, p.z, o.x, o.y, o.z, self.grip]
    }
}
