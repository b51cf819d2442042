//! Per-stage success and timing over a set of annotated scenes.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use toolsmith_core::action::{run_control_loop, ControlConfig, SimWorld};
use toolsmith_core::evaluation::StageSample;
use toolsmith_core::scene::{formulate_tool_prompt, SceneSnapshot};

use crate::config::PipelineConfig;
use crate::pipeline::{generate_valid_mesh, Backends, PipelineError, TaskKind};

pub const STAGE_INTERPRET: &str = "Environmental interpretation";
pub const STAGE_TOOL: &str = "Tool generation";
pub const STAGE_ACTION: &str = "Action generation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub scene_id: String,
    pub expected_tool: Option<String>,
    pub predicted_tool: Option<String>,
    pub interpret_ok: bool,
    pub interpret_s: f64,
    pub tool_ok: bool,
    pub attempts: u32,
    pub tool_s: f64,
    pub action_ok: bool,
    pub action_s: f64,
    pub error: Option<String>,
}

impl SceneOutcome {
    pub fn samples(&self) -> [StageSample; 3] {
        let s = |stage: &str, success, seconds| StageSample { stage: stage.to_string(), success, seconds };
        [
            s(STAGE_INTERPRET, self.interpret_ok, self.interpret_s),
            s(STAGE_TOOL, self.tool_ok, self.tool_s),
            s(STAGE_ACTION, self.action_ok, self.action_s),
        ]
    }
}

/// Scene files (`*.json`) in `dir`, sorted by name.
pub fn scene_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Scores each stage independently on one scene. Interpretation counts as
/// correct when it names the expected tool. Tool generation always uses the
/// expected tool so that a wrong interpretation does not mask it. The
/// rollout uses the expected target.
pub fn evaluate_scene(
    snapshot: &SceneSnapshot,
    task: TaskKind,
    cfg: &PipelineConfig,
    backends: &Backends,
) -> SceneOutcome {
    let mut out = SceneOutcome {
        scene_id: snapshot.scene_id.clone(),
        expected_tool: snapshot.expected_tool.clone(),
        predicted_tool: None,
        interpret_ok: false,
        interpret_s: 0.0,
        tool_ok: false,
        attempts: 0,
        tool_s: 0.0,
        action_ok: false,
        action_s: 0.0,
        error: None,
    };
    let t = Instant::now();
    let analysis = backends.interpreter.interpret(snapshot);
    out.interpret_s = t.elapsed().as_secs_f64();
    match &analysis {
        Ok(a) => {
            out.predicted_tool = Some(a.tool_name.clone());
            out.interpret_ok = snapshot.expected_tool.as_deref().is_some_and(|e| e == a.tool_name);
        }
        Err(e) => note(&mut out.error, format!("interpret: {e}")),
    }

    let tool = snapshot.expected_tool.clone().or_else(|| out.predicted_tool.clone());
    if let Some(tool) = tool {
        let mut gen = Duration::ZERO;
        let mut val = Duration::ZERO;
        let result = formulate_tool_prompt(&tool).map_err(PipelineError::from).and_then(|prompt| {
            generate_valid_mesh(backends.generator.as_ref(), &prompt, cfg.max_genmesh_attempts, &mut gen, &mut val)
        });
        out.tool_s = (gen + val).as_secs_f64();
        match result {
            Ok(p) => {
                out.tool_ok = true;
                out.attempts = p.attempts;
            }
            Err(e) => {
                out.attempts = cfg.max_genmesh_attempts;
                note(&mut out.error, format!("genmesh: {e}"));
            }
        }
    }

    let t = Instant::now();
    let rollout = (|| -> Result<bool, String> {
        let target = snapshot.target().ok_or("no target object")?;
        let mut world = SimWorld::from_scene(snapshot, SimWorld::default_workspace());
        let mut spec = task.task_for(&target.name, &world)?;
        if let Some(n) = cfg.control.max_steps {
            spec.max_steps = n;
        }
        let control = ControlConfig {
            hz: cfg.control.hz,
            mode: cfg.control.mode,
            limits: cfg.control.limits,
            seed: cfg.seed,
            episode_id: format!("{}-{}", snapshot.scene_id, spec.task_name),
            ..ControlConfig::default()
        };
        let mut policy = (backends.policy)();
        let ep = run_control_loop(policy.as_mut(), &mut world, &spec, &control).map_err(|e| e.to_string())?;
        Ok(ep.success)
    })();
    out.action_s = t.elapsed().as_secs_f64();
    match rollout {
        Ok(ok) => out.action_ok = ok,
        Err(e) => note(&mut out.error, format!("act: {e}")),
    }
    out
}

fn note(slot: &mut Option<String>, e: String) {
    slot.get_or_insert(e);
}
