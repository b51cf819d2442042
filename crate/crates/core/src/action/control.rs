use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    apply_action, predict_action, ActionError, ActionLimits, GoalTracker, ManipulatorState, Policy, PolicyError,
    SimWorld, TaskSpec,
};
use crate::episodes::{Episode, EpisodeMetadata, Step, StepObservation};

pub const DEFAULT_HZ: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    /// Ticks paced at `1/hz` seconds.
    #[default]
    Realtime,
    /// Ticks run back to back.
    Fast,
}

impl std::str::FromStr for LoopMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(Self::Realtime),
            "fast" => Ok(Self::Fast),
            other => Err(format!("unknown loop mode {other:?} (expected realtime or fast)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig {
    pub hz: f64,
    pub mode: LoopMode,
    pub limits: ActionLimits,
    /// Passed to `Policy::reset` and recorded as the world seed.
    pub seed: u64,
    pub episode_id: String,
    pub initial_state: ManipulatorState,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            hz: DEFAULT_HZ,
            mode: LoopMode::Realtime,
            limits: ActionLimits::default(),
            seed: 0,
            episode_id: "episode-0".into(),
            initial_state: ManipulatorState::home(),
        }
    }
}

impl ControlConfig {
    pub fn fast() -> Self {
        Self { mode: LoopMode::Fast, ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("control rate must be positive and finite, got {0}")]
    InvalidHz(f64),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("target object {0:?} is not in the world")]
    TargetMissing(String),
    #[error("policy failed before the first step: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Runs observe, predict, apply until the goal holds or `task.max_steps`
/// ticks have elapsed.
///
/// A policy error after at least one recorded step ends the episode as a
/// failure with the message in `metadata.error`.
pub fn run_control_loop(
    policy: &mut (impl Policy + ?Sized),
    world: &mut SimWorld,
    task: &TaskSpec,
    cfg: &ControlConfig,
) -> Result<Episode, ControlError> {
    if !(cfg.hz > 0.0 && cfg.hz.is_finite()) {
        return Err(ControlError::InvalidHz(cfg.hz));
    }
    task.validate().map_err(ControlError::InvalidTask)?;
    if world.index_of(&task.target_object).is_none() {
        return Err(ControlError::TargetMissing(task.target_object.clone()));
    }

    policy.reset(task, cfg.seed);
    let mut episode = Episode::new(
        cfg.episode_id.clone(),
        task.task_name.clone(),
        task.instruction.clone(),
        EpisodeMetadata {
            hz: cfg.hz,
            world_seed: cfg.seed,
            policy: policy.name(),
            created_at: unix_now(),
            wall_seconds: 0.0,
            error: None,
        },
    );
    let mut tracker = GoalTracker::new(task);
    let mut state = cfg.initial_state;
    let period = Duration::from_secs_f64(1.0 / cfg.hz);
    let start = Instant::now();
    let mut success = false;

    for tick in 0..task.max_steps {
        let obs = world.observe(&state);
        let action = match predict_action(policy, &obs, &task.instruction, &cfg.limits) {
            Ok(a) => a,
            Err(e) if episode.is_empty() => return Err(e.into()),
            Err(e) => {
                episode.metadata.error = Some(e.to_string());
                break;
            }
        };
        state = apply_action(&state, &action, world, &cfg.limits)?;
        episode
            .record_step(Step::new(
                StepObservation { state: obs.state, image_ref: obs.image_ref },
                action,
                task.instruction.clone(),
            ))
            .expect("episode is open");
        success = tracker.update(&state, world);
        if cfg.mode == LoopMode::Realtime {
            let deadline = start + period * (tick as u32 + 1);
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
        if success {
            break;
        }
    }

    episode.metadata.wall_seconds = start.elapsed().as_secs_f64();
    episode.finalize(success, state).expect("episode has steps");
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::super::{ActionVector7, NullPolicy, ScriptedExpert, SimObject};
    use super::*;
    use crate::Vec3d;

    fn world() -> SimWorld {
        SimWorld {
            objects: vec![
                SimObject {
                    name: "cake".into(),
                    position: Vec3d::new(0.1, 0.05, 0.04),
                    size_mm: 120.0,
                    color_id: "white".into(),
                    held: false,
                },
                SimObject {
                    name: "plate".into(),
                    position: Vec3d::new(-0.15, 0.1, 0.01),
                    size_mm: 200.0,
                    color_id: "white".into(),
                    held: false,
                },
            ],
            workspace: SimWorld::default_workspace(),
            background_id: "table".into(),
        }
    }

    #[test]
    fn null_policy_fails_at_max_steps() {
        let mut task = TaskSpec::cut("cake");
        task.max_steps = 40;
        let ep = run_control_loop(&mut NullPolicy, &mut world(), &task, &ControlConfig::fast()).unwrap();
        assert!(!ep.success);
        assert_eq!(ep.steps.len(), 40);
        ep.check_schema().unwrap();
    }

    #[test]
    fn expert_succeeds_on_both_tasks() {
        let limits = ActionLimits::default();
        for task in [TaskSpec::cut("cake"), TaskSpec::pick_place("cake", Vec3d::new(-0.15, 0.1, 0.03))] {
            let mut w = world();
            let ep = run_control_loop(&mut ScriptedExpert::new(limits), &mut w, &task, &ControlConfig::fast()).unwrap();
            assert!(ep.success, "{}", task.task_name);
            assert!(ep.steps.len() < task.max_steps);
            assert!(ep.steps.last().unwrap().is_terminal);
        }
    }

    #[test]
    fn missing_target_and_bad_rate() {
        let task = TaskSpec::cut("bread");
        assert!(matches!(
            run_control_loop(&mut NullPolicy, &mut world(), &task, &ControlConfig::fast()),
            Err(ControlError::TargetMissing(_))
        ));
        let cfg = ControlConfig { hz: 0.0, ..ControlConfig::fast() };
        assert!(matches!(
            run_control_loop(&mut NullPolicy, &mut world(), &TaskSpec::cut("cake"), &cfg),
            Err(ControlError::InvalidHz(_))
        ));
    }

    struct FailsAfter(usize);
    impl Policy for FailsAfter {
        fn name(&self) -> String {
            "fails-after".into()
        }
        fn predict(&mut self, _: &super::super::Observation, _: &str) -> Result<ActionVector7, PolicyError> {
            if self.0 == 0 {
                return Err(PolicyError::BackendUnavailable("gone".into()));
            }
            self.0 -= 1;
            Ok(ActionVector7::zero())
        }
    }

    #[test]
    fn policy_error_marks_failure() {
        let task = TaskSpec::cut("cake");
        let ep = run_control_loop(&mut FailsAfter(3), &mut world(), &task, &ControlConfig::fast()).unwrap();
        assert_eq!(ep.steps.len(), 3);
        assert!(!ep.success);
        assert!(ep.metadata.error.as_deref().unwrap().contains("gone"));
        assert!(matches!(
            run_control_loop(&mut FailsAfter(0), &mut world(), &task, &ControlConfig::fast()),
            Err(ControlError::Policy(_))
        ));
    }
}
