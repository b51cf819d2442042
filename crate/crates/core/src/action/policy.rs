use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{wrap_angle, ActionLimits, ActionVector7, GoalPredicate, Observation, TaskSpec, CUT_MAX_GRIP, CUT_RETRACT_M, GRIP_LATCH};
use crate::Vec3d;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed policy response: {0}")]
    MalformedResponse(String),
    #[error("injected failure")]
    InjectedFailure,
    #[error("policy cannot act: {0}")]
    NotReady(String),
}

/// Maps an observation and instruction to the next action.
///
/// A policy instance drives one control loop at a time; run loops in
/// parallel with separate instances.
pub trait Policy {
    fn name(&self) -> String;

    /// Called once before each rollout.
    fn reset(&mut self, _task: &TaskSpec, _seed: u64) {}

    fn predict(&mut self, observation: &Observation, instruction: &str) -> Result<ActionVector7, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn reset(&mut self, task: &TaskSpec, seed: u64) {
        (**self).reset(task, seed)
    }
    fn predict(&mut self, observation: &Observation, instruction: &str) -> Result<ActionVector7, PolicyError> {
        (**self).predict(observation, instruction)
    }
}

/// Queries the policy, rejects non-finite output and clamps magnitudes.
pub fn predict_action(
    policy: &mut (impl Policy + ?Sized),
    observation: &Observation,
    instruction: &str,
    limits: &ActionLimits,
) -> Result<ActionVector7, PolicyError> {
    let a = policy.predict(observation, instruction)?;
    if let Some(i) = a.to_array().iter().position(|v| !v.is_finite()) {
        return Err(PolicyError::MalformedResponse(format!("component {i} is not finite")));
    }
    Ok(a.clamped(limits))
}

/// Always commands the zero action.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn name(&self) -> String {
        "null".into()
    }

    fn predict(&mut self, _: &Observation, _: &str) -> Result<ActionVector7, PolicyError> {
        Ok(ActionVector7::zero())
    }
}

/// Reference policy with privileged task knowledge: a proportional
/// controller with unit gain toward task waypoints, each component capped
/// at the step limit.
///
/// * cut: above the target, down to its center, then up past the retract height
/// * grasp / place: to the target, close, (carry to the goal, open)
#[derive(Clone, Debug, Default)]
pub struct ScriptedExpert {
    limits: ActionLimits,
    task: Option<TaskSpec>,
    stage: usize,
    cut_anchor: Option<Vec3d>,
}

const ARRIVED_M: f64 = 1e-9;

impl ScriptedExpert {
    pub fn new(limits: ActionLimits) -> Self {
        Self { limits, ..Default::default() }
    }

    fn toward(&self, from: &Observation, to: Vec3d) -> ActionVector7 {
        let d = to - from.state.position;
        let o = from.state.orientation;
        let l = &self.limits;
        ActionVector7 {
            dx: d.x.clamp(-l.max_translation, l.max_translation),
            dy: d.y.clamp(-l.max_translation, l.max_translation),
            dz: d.z.clamp(-l.max_translation, l.max_translation),
            droll: (-wrap_angle(o.x)).clamp(-l.max_rotation, l.max_rotation),
            dpitch: (-wrap_angle(o.y)).clamp(-l.max_rotation, l.max_rotation),
            dyaw: (-wrap_angle(o.z)).clamp(-l.max_rotation, l.max_rotation),
            dgrip: 0.0,
        }
    }

    fn grip(&self, delta: f64) -> ActionVector7 {
        ActionVector7 { dgrip: delta.clamp(-self.limits.max_grip, self.limits.max_grip), ..Default::default() }
    }
}

impl Policy for ScriptedExpert {
    fn name(&self) -> String {
        "scripted_expert".into()
    }

    fn reset(&mut self, task: &TaskSpec, _seed: u64) {
        self.task = Some(task.clone());
        self.stage = 0;
        self.cut_anchor = None;
    }

    fn predict(&mut self, obs: &Observation, _instruction: &str) -> Result<ActionVector7, PolicyError> {
        let task = self.task.as_ref().ok_or_else(|| PolicyError::NotReady("expert was not reset with a task".into()))?;
        let target = obs
            .object(&task.target_object)
            .ok_or_else(|| PolicyError::NotReady(format!("{} is not observed", task.target_object)))?;
        let pos = obs.state.position;

        match task.goal.clone() {
            GoalPredicate::Cut => {
                if obs.state.grip > CUT_MAX_GRIP {
                    return Ok(self.grip(-1.0));
                }
                let anchor = *self.cut_anchor.get_or_insert(target.position);
                let waypoints = [
                    anchor + Vec3d::new(0.0, 0.0, 0.06),
                    anchor,
                    anchor + Vec3d::new(0.0, 0.0, CUT_RETRACT_M + 0.02),
                ];
                while self.stage < waypoints.len() && pos.distance(waypoints[self.stage]) <= ARRIVED_M {
                    self.stage += 1;
                }
                Ok(match waypoints.get(self.stage) {
                    Some(&wp) => self.toward(obs, wp),
                    None => ActionVector7::zero(),
                })
            }
            goal @ (GoalPredicate::Grasp | GoalPredicate::PlaceAt { .. }) => {
                if !target.held {
                    if obs.state.grip >= GRIP_LATCH {
                        return Ok(self.grip(-1.0));
                    }
                    if pos.distance(target.position) <= 1e-6 {
                        return Ok(self.grip(1.0));
                    }
                    return Ok(self.toward(obs, target.position));
                }
                match goal {
                    GoalPredicate::PlaceAt { position, .. } => {
                        if pos.distance(position) <= 1e-6 {
                            Ok(self.grip(-1.0))
                        } else {
                            Ok(self.toward(obs, position))
                        }
                    }
                    _ => Ok(ActionVector7::zero()),
                }
            }
        }
    }
}

/// Wraps a policy so that each rollout fails outright with probability `p`.
/// The draw depends only on the rollout seed.
#[derive(Clone, Debug)]
pub struct FailureInjection<P> {
    pub inner: P,
    pub probability: f64,
    failing: bool,
}

impl<P> FailureInjection<P> {
    pub fn new(inner: P, probability: f64) -> Self {
        Self { inner, probability: probability.clamp(0.0, 1.0), failing: false }
    }
}

impl<P: Policy> Policy for FailureInjection<P> {
    fn name(&self) -> String {
        format!("{}+failure({})", self.inner.name(), self.probability)
    }

    fn reset(&mut self, task: &TaskSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        self.failing = rng.gen_bool(self.probability);
        self.inner.reset(task, seed);
    }

    fn predict(&mut self, observation: &Observation, instruction: &str) -> Result<ActionVector7, PolicyError> {
        if self.failing {
            return Err(PolicyError::InjectedFailure);
        }
        self.inner.predict(observation, instruction)
    }
}
