//! Generalization evaluation: scenario generation per category, batched
//! fast-mode rollouts, and success-rate reports.

mod report;
mod scenario;

pub use report::{aggregate_report, render_report, ReportFormat, StageRow, StageSample, SuccessReport, Tally, CSV_SCHEMA_VERSION};
pub use scenario::{
    generate_scenarios, generate_suite, nominal_setup, Perturbation, PerturbationRanges, Scenario, Setup,
};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{run_control_loop, ActionLimits, ControlConfig, LoopMode, Policy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown category {0:?} (expected seen, physical, motion, semantic or visual)")]
    UnknownCategory(String),
    #[error("scenario count must be at least 1")]
    NoScenarios,
    #[error("no trial results to aggregate")]
    EmptyResults,
    #[error("invalid perturbation ranges: {0}")]
    InvalidRanges(String),
    #[error("setup is not usable: {0}")]
    InvalidSetup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Seen,
    Physical,
    Motion,
    Semantic,
    Visual,
}

impl Category {
    pub const ALL: [Category; 5] = [Self::Seen, Self::Physical, Self::Motion, Self::Semantic, Self::Visual];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Seen => "seen",
            Self::Physical => "physical",
            Self::Motion => "motion",
            Self::Semantic => "semantic",
            Self::Visual => "visual",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| EvalError::UnknownCategory(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario_id: String,
    pub category: Category,
    pub task_name: String,
    pub success: bool,
    pub steps_used: usize,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialResult {
    /// Every field except the measured wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.scenario_id == other.scenario_id
            && self.category == other.category
            && self.task_name == other.task_name
            && self.success == other.success
            && self.steps_used == other.steps_used
            && self.error == other.error
    }
}

/// One fast-mode rollout per scenario with a fresh policy from `make_policy`.
/// Trials run in parallel; results keep the input order. Errors are captured
/// per trial.
pub fn run_trials<P, F>(make_policy: F, scenarios: &[Scenario], limits: ActionLimits) -> Vec<TrialResult>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    scenarios
        .par_iter()
        .map(|sc| {
            let mut policy = make_policy();
            let mut world = sc.world.clone();
            let cfg = ControlConfig {
                mode: LoopMode::Fast,
                limits,
                seed: sc.seed,
                episode_id: sc.scenario_id.clone(),
                ..ControlConfig::default()
            };
            let start = Instant::now();
            let outcome = run_control_loop(&mut policy, &mut world, &sc.task, &cfg);
            let wall_seconds = start.elapsed().as_secs_f64();
            let (success, steps_used, error) = match outcome {
                Ok(ep) => {
                    let error = ep.metadata.error.clone();
                    (ep.success && error.is_none(), ep.steps.len(), error)
                }
                Err(e) => (false, 0, Some(e.to_string())),
            };
            TrialResult {
                scenario_id: sc.scenario_id.clone(),
                category: sc.category,
                task_name: sc.task.task_name.clone(),
                success,
                steps_used,
                wall_seconds,
                error,
            }
        })
        .collect()
}
