use serde::{Deserialize, Serialize};

use super::{wrap_angle, ActionError, ActionLimits, ActionVector7, ManipulatorState};
use crate::scene::SceneSnapshot;
use crate::{Aabb3d, Vec3d};

/// An object within this distance (m) of the end-effector can be grasped.
pub const GRASP_RANGE_M: f64 = 0.03;
/// Grip value whose upward crossing grasps and downward crossing releases.
pub const GRIP_LATCH: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub name: String,
    /// Meters.
    pub position: Vec3d,
    pub size_mm: f64,
    pub color_id: String,
    #[serde(default)]
    pub held: bool,
}

/// Kinematic stand-in for the robot cell. At most one object is held; a held
/// object moves with the end-effector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub objects: Vec<SimObject>,
    /// Reachable end-effector volume, meters.
    pub workspace: Aabb3d,
    pub background_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub name: String,
    pub position: Vec3d,
    pub size_mm: f64,
    pub held: bool,
}

/// What a policy sees each tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: ManipulatorState,
    pub objects: Vec<ObjectSummary>,
    pub background_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Observation {
    pub fn object(&self, name: &str) -> Option<&ObjectSummary> {
        self.objects.iter().find(|o| o.name == name)
    }
}

impl SimWorld {
    /// Default reachable volume: 0.8 m square, 0.5 m tall.
    pub fn default_workspace() -> Aabb3d {
        Aabb3d::new(Vec3d::new(-0.4, -0.4, 0.0), Vec3d::new(0.4, 0.4, 0.5))
    }

    pub fn from_scene(snapshot: &SceneSnapshot, workspace: Aabb3d) -> Self {
        Self {
            objects: snapshot
                .objects
                .iter()
                .map(|o| SimObject {
                    name: o.name.clone(),
                    position: o.position,
                    size_mm: o.approx_size_mm,
                    color_id: o.color_id.clone(),
                    held: false,
                })
                .collect(),
            workspace,
            background_id: snapshot.background_id.clone(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn held_index(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.held)
    }

    pub fn observe(&self, state: &ManipulatorState) -> Observation {
        Observation {
            state: *state,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectSummary { name: o.name.clone(), position: o.position, size_mm: o.size_mm, held: o.held })
                .collect(),
            background_id: self.background_id.clone(),
            image_ref: None,
        }
    }
}

/// Integrates one action.
///
/// Position is clamped to the workspace, angles wrapped into `(-pi, pi]`,
/// grip clamped to `[0, 1]`. An upward crossing of [`GRIP_LATCH`] grasps the
/// nearest object within [`GRASP_RANGE_M`]; a downward crossing releases.
pub fn apply_action(
    state: &ManipulatorState,
    action: &ActionVector7,
    world: &mut SimWorld,
    limits: &ActionLimits,
) -> Result<ManipulatorState, ActionError> {
    action.validate(limits)?;
    let rot = action.rotation();
    let next = ManipulatorState {
        position: world.workspace.clamp(state.position + action.translation()),
        orientation: Vec3d::new(
            wrap_angle(state.orientation.x + rot.x),
            wrap_angle(state.orientation.y + rot.y),
            wrap_angle(state.orientation.z + rot.z),
        ),
        grip: (state.grip + action.dgrip).clamp(0.0, 1.0),
    };

    let closing = state.grip < GRIP_LATCH && next.grip >= GRIP_LATCH;
    let opening = state.grip >= GRIP_LATCH && next.grip < GRIP_LATCH;
    if opening {
        for o in &mut world.objects {
            o.held = false;
        }
    } else if closing && world.held_index().is_none() {
        let nearest = world
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.position.distance(next.position)))
            .filter(|&(_, d)| d <= GRASP_RANGE_M)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = nearest {
            world.objects[i].held = true;
        }
    }
    if let Some(i) = world.held_index() {
        world.objects[i].position = next.position;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn world() -> SimWorld {
        SimWorld {
            objects: vec![SimObject {
                name: "cake".into(),
                position: Vec3d::new(0.1, 0.0, 0.05),
                size_mm: 120.0,
                color_id: "white".into(),
                held: false,
            }],
            workspace: SimWorld::default_workspace(),
            background_id: "table".into(),
        }
    }

    #[test]
    fn zero_action_is_identity() {
        let mut w = world();
        let s = ManipulatorState::home();
        let before = w.clone();
        assert_eq!(apply_action(&s, &ActionVector7::zero(), &mut w, &ActionLimits::default()).unwrap(), s);
        assert_eq!(w, before);
    }

    #[test]
    fn yaw_wraps() {
        let mut w = world();
        let mut s = ManipulatorState::home();
        s.orientation.z = PI - 0.05;
        let a = ActionVector7 { dyaw: 0.1, ..Default::default() };
        let n = apply_action(&s, &a, &mut w, &ActionLimits::default()).unwrap();
        assert!((n.orientation.z - (-PI + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn position_clamps_to_workspace() {
        let mut w = world();
        let mut s = ManipulatorState::home();
        s.position.x = 0.395;
        let a = ActionVector7 { dx: 0.02, ..Default::default() };
        let n = apply_action(&s, &a, &mut w, &ActionLimits::default()).unwrap();
        assert_eq!(n.position.x, 0.4);
    }

    #[test]
    fn grip_clamps() {
        let mut w = world();
        let s = ManipulatorState::home();
        let a = ActionVector7 { dgrip: -1.0, ..Default::default() };
        assert_eq!(apply_action(&s, &a, &mut w, &ActionLimits::default()).unwrap().grip, 0.0);
    }

    #[test]
    fn over_magnitude_rejected() {
        let mut w = world();
        let a = ActionVector7 { dz: 0.5, ..Default::default() };
        assert!(matches!(
            apply_action(&ManipulatorState::home(), &a, &mut w, &ActionLimits::default()),
            Err(ActionError::OverMagnitude { index: 2, .. })
        ));
        let a = ActionVector7 { dx: f64::NAN, ..Default::default() };
        assert!(apply_action(&ManipulatorState::home(), &a, &mut w, &ActionLimits::default()).is_err());
    }

    #[test]
    fn grasp_carry_release() {
        let mut w = world();
        let l = ActionLimits::default();
        let mut s = ManipulatorState { position: Vec3d::new(0.1, 0.0, 0.07), orientation: Vec3d::zero(), grip: 0.0 };
        // 2 cm away: in range
        s = apply_action(&s, &ActionVector7 { dgrip: 1.0, ..Default::default() }, &mut w, &l).unwrap();
        assert!(w.objects[0].held);
        assert_eq!(w.objects[0].position, s.position);
        s = apply_action(&s, &ActionVector7 { dx: 0.02, dz: 0.01, ..Default::default() }, &mut w, &l).unwrap();
        assert_eq!(w.objects[0].position, s.position);
        s = apply_action(&s, &ActionVector7 { dgrip: -1.0, ..Default::default() }, &mut w, &l).unwrap();
        assert!(!w.objects[0].held);
        let dropped_at = w.objects[0].position;
        apply_action(&s, &ActionVector7 { dx: -0.02, ..Default::default() }, &mut w, &l).unwrap();
        assert_eq!(w.objects[0].position, dropped_at);
    }

    #[test]
    fn closing_out_of_range_grasps_nothing() {
        let mut w = world();
        let s = ManipulatorState { position: Vec3d::new(0.1, 0.0, 0.09), orientation: Vec3d::zero(), grip: 0.0 };
        apply_action(&s, &ActionVector7 { dgrip: 1.0, ..Default::default() }, &mut w, &ActionLimits::default()).unwrap();
        assert!(w.held_index().is_none());
    }
}
