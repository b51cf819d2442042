use serde::{Deserialize, Serialize};

use super::{ManipulatorState, SimWorld};
use crate::Vec3d;

/// End-effector must pass this close (m) to the target center to start a cut.
pub const CUT_CONTACT_M: f64 = 0.01;
/// Grip must stay at or below this while cutting (blade held open-handed).
pub const CUT_MAX_GRIP: f64 = 0.2;
/// Height (m) above the contact point that completes a cut.
pub const CUT_RETRACT_M: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: usize = 150;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    Cut,
    PlaceAt { position: Vec3d, tolerance_m: f64 },
    Grasp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Short label used for dataset grouping, e.g. `cut` or `pick_place`.
    pub task_name: String,
    pub instruction: String,
    pub target_object: String,
    pub goal: GoalPredicate,
    pub max_steps: usize,
}

impl TaskSpec {
    pub fn cut(target: &str) -> Self {
        Self {
            task_name: "cut".into(),
            instruction: format!("Cut one piece of {target}"),
            target_object: target.into(),
            goal: GoalPredicate::Cut,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn pick_place(target: &str, destination: Vec3d) -> Self {
        Self {
            task_name: "pick_place".into(),
            instruction: format!("Pick one piece of {target} and place on plate"),
            target_object: target.into(),
            goal: GoalPredicate::PlaceAt { position: destination, tolerance_m: 0.02 },
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn grasp(target: &str) -> Self {
        Self {
            task_name: "grasp".into(),
            instruction: format!("Pick up the {target}"),
            target_object: target.into(),
            goal: GoalPredicate::Grasp,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps < 1 {
            return Err("max_steps must be at least 1".into());
        }
        if self.target_object.trim().is_empty() {
            return Err("target_object is empty".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("instruction is empty".into());
        }
        if let GoalPredicate::PlaceAt { position, tolerance_m } = &self.goal {
            if !(*tolerance_m > 0.0) || !position.is_finite() {
                return Err(format!("place goal needs a finite position and positive tolerance, got {tolerance_m}"));
            }
        }
        Ok(())
    }
}

/// Evaluates a goal predicate over a rollout. Cutting needs memory of the
/// contact height, so the tracker is fed every post-action state in order.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalTracker {
    goal: GoalPredicate,
    target: String,
    contact_z: Option<f64>,
}

impl GoalTracker {
    pub fn new(task: &TaskSpec) -> Self {
        Self { goal: task.goal.clone(), target: task.target_object.clone(), contact_z: None }
    }

    pub fn contact_z(&self) -> Option<f64> {
        self.contact_z
    }

    /// Returns whether the goal holds in this state.
    pub fn update(&mut self, state: &ManipulatorState, world: &SimWorld) -> bool {
        let Some(target) = world.object(&self.target) else { return false };
        match &self.goal {
            GoalPredicate::Cut => {
                if self.contact_z.is_none()
                    && state.grip <= CUT_MAX_GRIP
                    && state.position.distance(target.position) <= CUT_CONTACT_M
                {
                    self.contact_z = Some(state.position.z);
                }
                matches!(self.contact_z, Some(z0) if state.position.z >= z0 + CUT_RETRACT_M)
            }
            GoalPredicate::PlaceAt { position, tolerance_m } => {
                !target.held && target.position.distance(*position) <= *tolerance_m
            }
            GoalPredicate::Grasp => target.held,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::SimObject;
    use super::*;

    fn world_with(pos: Vec3d, held: bool) -> SimWorld {
        SimWorld {
            objects: vec![SimObject { name: "cake".into(), position: pos, size_mm: 100.0, color_id: "w".into(), held }],
            workspace: SimWorld::default_workspace(),
            background_id: "t".into(),
        }
    }

    fn at(x: f64, y: f64, z: f64, grip: f64) -> ManipulatorState {
        ManipulatorState { position: Vec3d::new(x, y, z), orientation: Vec3d::zero(), grip }
    }

    #[test]
    fn cut_needs_contact_then_retract() {
        let w = world_with(Vec3d::new(0.0, 0.0, 0.05), false);
        let mut t = GoalTracker::new(&TaskSpec::cut("cake"));
        assert!(!t.update(&at(0.0, 0.0, 0.2, 0.0), &w));
        assert!(!t.update(&at(0.0, 0.0, 0.055, 0.0), &w));
        assert_eq!(t.contact_z(), Some(0.055));
        assert!(!t.update(&at(0.0, 0.0, 0.104, 0.0), &w));
        assert!(t.update(&at(0.0, 0.0, 0.106, 0.0), &w));
    }

    #[test]
    fn cut_with_closed_grip_does_not_count() {
        let w = world_with(Vec3d::new(0.0, 0.0, 0.05), false);
        let mut t = GoalTracker::new(&TaskSpec::cut("cake"));
        t.update(&at(0.0, 0.0, 0.05, 0.5), &w);
        assert_eq!(t.contact_z(), None);
        assert!(!t.update(&at(0.0, 0.0, 0.2, 0.5), &w));
    }

    #[test]
    fn place_requires_release_within_tolerance() {
        let goal = Vec3d::new(0.2, 0.2, 0.03);
        let task = TaskSpec::pick_place("cake", goal);
        let mut t = GoalTracker::new(&task);
        let s = at(0.0, 0.0, 0.0, 0.0);
        assert!(!t.update(&s, &world_with(goal, true)));
        assert!(t.update(&s, &world_with(goal + Vec3d::new(0.019, 0.0, 0.0), false)));
        assert!(!t.update(&s, &world_with(goal + Vec3d::new(0.021, 0.0, 0.0), false)));
    }

    #[test]
    fn task_validation() {
        let mut t = TaskSpec::grasp("cake");
        t.validate().unwrap();
        t.max_steps = 0;
        assert!(t.validate().is_err());
        let mut t = TaskSpec::pick_place("cake", Vec3d::zero());
        t.goal = GoalPredicate::PlaceAt { position: Vec3d::zero(), tolerance_m: 0.0 };
        assert!(t.validate().is_err());
    }

    #[test]
    fn goal_serde_shape() {
        let g = GoalPredicate::PlaceAt { position: Vec3d::new(0.1, 0.2, 0.0), tolerance_m: 0.02 };
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            r#"{"kind":"place_at","position":[0.1,0.2,0.0],"tolerance_m":0.02}"#
        );
        assert_eq!(serde_json::to_string(&GoalPredicate::Cut).unwrap(), r#"{"kind":"cut"}"#);
    }
}
