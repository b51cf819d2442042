//! The end-to-end run: scene, tool prompt, mesh, G-code, task rollout.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toolsmith_core::action::{
    run_control_loop, ControlConfig, ControlError, Policy, ScriptedExpert, SimWorld, TaskSpec,
};
use toolsmith_core::episodes::{save_episode, EpisodeError};
use toolsmith_core::mesh::{
    orient_outward, parse_mesh_text, scale_mesh_to_target, serialize_mesh, weld_vertices, Defect, MeshError,
    WELD_TOLERANCE_MM,
};
use toolsmith_core::scene::{
    formulate_tool_prompt, InterpreterBackend, MockInterpreter, ReplayInterpreter, SceneAnalysis, SceneError,
    SceneSnapshot, ToolTable,
};
use toolsmith_core::slicer::{
    emit_gcode, gcode_stats, generate_infill, infill_angle_for_layer, slice_mesh, GcodeStats, SliceError,
};
use toolsmith_core::{Mesh, Vec3d};

use crate::config::{BackendMode, ConfigError, PipelineConfig};
use crate::generate::{FlakyGenerator, GenerateError, MeshGenerator, MockMeshGenerator, RemoteGenerator};
use crate::wire::{RemoteInterpreter, RemotePolicy, WireClient};

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const MESH_FILE: &str = "tool.obj";
pub const GCODE_FILE: &str = "tool.gcode";
pub const EPISODE_FILE: &str = "episode.json";
pub const RECORD_FILE: &str = "run.json";

/// Height (m) above the plate at which a placed object is released.
pub const PLACE_HEIGHT_M: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Interpret,
    Genmesh,
    Validate,
    Scale,
    Slice,
    Write,
    Control,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

/// Which task to run against the scene's target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Cut,
    PickPlace,
    Grasp,
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cut" => Ok(Self::Cut),
            "pick_place" | "pick-place" => Ok(Self::PickPlace),
            "grasp" => Ok(Self::Grasp),
            other => Err(format!("unknown task {other:?} (expected cut, pick_place or grasp)")),
        }
    }
}

impl TaskKind {
    /// Builds the task for `target`. Pick-and-place needs a `plate` in the world.
    pub fn task_for(&self, target: &str, world: &SimWorld) -> Result<TaskSpec, String> {
        Ok(match self {
            Self::Cut => TaskSpec::cut(target),
            Self::Grasp => TaskSpec::grasp(target),
            Self::PickPlace => {
                let plate = world.object("plate").ok_or("pick_place needs a plate in the scene")?;
                TaskSpec::pick_place(target, plate.position + Vec3d::new(0.0, 0.0, PLACE_HEIGHT_M))
            }
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("no valid mesh after {attempts} attempt(s); last problem: {last}")]
    ValidationExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error("invalid task: {0}")]
    Task(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Per-stage seconds. Genmesh includes every attempt.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub interpret_s: f64,
    pub genmesh_s: f64,
    pub validate_s: f64,
    pub slice_s: f64,
    pub control_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.interpret_s + self.genmesh_s + self.validate_s + self.slice_s + self.control_s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub mesh: Option<PathBuf>,
    pub gcode: Option<PathBuf>,
    pub episode: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunRecord {
    pub schema_version: u32,
    pub scene_id: String,
    pub seed: u64,
    pub analysis: Option<SceneAnalysis>,
    pub attempts: u32,
    /// Defects seen on rejected attempts, in order.
    pub rejected_defects: Vec<String>,
    /// Defects repaired on the accepted mesh.
    pub fixes: Vec<Defect>,
    pub tool_extent_mm: Option<Vec3d>,
    pub gcode: Option<GcodeStats<f64>>,
    pub task: Option<TaskSpec>,
    pub episode_steps: usize,
    pub episode_success: bool,
    pub timings: StageTimings,
    pub artifacts: Artifacts,
    pub success: bool,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

impl PipelineRunRecord {
    fn new(scene_id: &str, seed: u64) -> Self {
        Self {
            schema_version: RECORD_SCHEMA_VERSION,
            scene_id: scene_id.to_string(),
            seed,
            analysis: None,
            attempts: 0,
            rejected_defects: Vec::new(),
            fixes: Vec::new(),
            tool_extent_mm: None,
            gcode: None,
            task: None,
            episode_steps: 0,
            episode_success: false,
            timings: StageTimings::default(),
            artifacts: Artifacts::default(),
            success: false,
            failed_stage: None,
            error: None,
        }
    }
}

#[derive(Debug, Error)]
#[error("pipeline failed at {stage}: {error}")]
pub struct PipelineFailure {
    pub stage: Stage,
    pub error: PipelineError,
    pub record: Box<PipelineRunRecord>,
}

type PolicyFactory = Box<dyn Fn() -> Box<dyn Policy + Send> + Send + Sync>;

/// The pluggable model backends of one run.
pub struct Backends {
    pub interpreter: Box<dyn InterpreterBackend>,
    pub generator: Box<dyn MeshGenerator>,
    pub policy: PolicyFactory,
}

impl Backends {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let b = &cfg.backends;
        let timeout = Duration::from_secs_f64(cfg.timeout_s);
        let client = |url: &Option<String>| WireClient::new(url.clone().unwrap_or_default(), timeout);

        let interpreter: Box<dyn InterpreterBackend> = match b.interpret {
            BackendMode::Remote => Box::new(RemoteInterpreter { client: client(&b.interpret_url) }),
            BackendMode::Mock => match &b.interpret_replay {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
                    Box::new(ReplayInterpreter::from_json(&text)?)
                }
                None => {
                    let table = match &b.tool_table {
                        Some(path) => ToolTable::load(path)?,
                        None => ToolTable::default(),
                    };
                    Box::new(MockInterpreter::new(table))
                }
            },
        };
        let generator: Box<dyn MeshGenerator> = match b.genmesh {
            BackendMode::Remote => Box::new(RemoteGenerator { client: client(&b.genmesh_url), max_faces: None }),
            BackendMode::Mock if b.mock_genmesh_failures > 0 => {
                Box::new(FlakyGenerator { inner: MockMeshGenerator, failures: b.mock_genmesh_failures })
            }
            BackendMode::Mock => Box::new(MockMeshGenerator),
        };
        let limits = cfg.control.limits;
        let policy: PolicyFactory = match b.act {
            BackendMode::Remote => {
                let remote = RemotePolicy { client: client(&b.act_url), limits };
                Box::new(move || Box::new(remote.clone()))
            }
            BackendMode::Mock => Box::new(move || Box::new(ScriptedExpert::new(limits))),
        };
        Ok(Self { interpreter, generator, policy })
    }
}

/// Outcome of mesh preparation for one accepted attempt.
#[derive(Clone, Debug)]
pub struct PreparedMesh {
    pub mesh: Mesh,
    pub attempts: u32,
    pub rejected: Vec<String>,
    pub fixes: Vec<Defect>,
}

/// Parses, welds, orients and validates generated meshes, asking for a new
/// one after each rejection, up to `max_attempts`.
pub fn generate_valid_mesh(
    generator: &dyn MeshGenerator,
    prompt: &str,
    max_attempts: u32,
    genmesh_time: &mut Duration,
    validate_time: &mut Duration,
) -> Result<PreparedMesh, PipelineError> {
    let mut rejected = Vec::new();
    for attempt in 1..=max_attempts {
        let t = Instant::now();
        let text = generator.generate(prompt, attempt);
        *genmesh_time += t.elapsed();
        let text = text?;

        let t = Instant::now();
        let outcome = prepare_mesh_text(&text);
        *validate_time += t.elapsed();
        match outcome {
            Ok((mesh, fixes)) => return Ok(PreparedMesh { mesh, attempts: attempt, rejected, fixes }),
            Err(problem) => rejected.push(format!("attempt {attempt}: {problem}")),
        }
    }
    let last = rejected.last().cloned().unwrap_or_default();
    Err(PipelineError::ValidationExhausted { attempts: max_attempts, last })
}

/// Parse, weld, orient outward, validate. Returns the mesh and the repairs
/// made, or a description of the remaining defects.
pub fn prepare_mesh_text(text: &str) -> Result<(Mesh, Vec<Defect>), String> {
    let parsed: Mesh = parse_mesh_text(text).map_err(|e| e.to_string())?;
    let welded = weld_vertices(&parsed, WELD_TOLERANCE_MM).map_err(|e| e.to_string())?;
    let (oriented, report) = orient_outward(&welded.mesh);
    if report.passes() {
        Ok((oriented, report.fixes))
    } else {
        let kinds: Vec<String> = report.defects.iter().map(|d| d.kind.to_string()).collect();
        Err(format!("{} defect(s): {}", report.defects.len(), kinds.join(", ")))
    }
}

/// Slices a placed mesh and emits its program text and statistics.
pub fn fabricate(mesh: &Mesh, cfg: &PipelineConfig) -> Result<(String, GcodeStats<f64>), SliceError> {
    let layers = slice_mesh(mesh, &cfg.printer)?;
    let infill: Vec<_> = layers
        .iter()
        .map(|l| generate_infill(l, cfg.printer.infill_spacing_mm, infill_angle_for_layer(l.index)))
        .collect();
    let program = emit_gcode(&layers, &infill, &cfg.printer)?;
    Ok((program.to_text(), gcode_stats(&program)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

fn write_record(dir: &Path, record: &PipelineRunRecord) {
    let mut text = serde_json::to_string_pretty(record).expect("record serializes");
    text.push('\n');
    let _ = std::fs::write(dir.join(RECORD_FILE), text);
}

/// Runs every stage for one scene. Artifacts go to `cfg.output_dir`, which
/// is created if missing; `run.json` is written on success and on failure.
pub fn run_pipeline(
    scene_path: &Path,
    task: TaskKind,
    cfg: &PipelineConfig,
    backends: &Backends,
) -> Result<PipelineRunRecord, PipelineFailure> {
    let start = Instant::now();
    let out = cfg.output_dir.clone();
    let mut record = PipelineRunRecord::new("", cfg.seed);

    macro_rules! fail {
        ($stage:expr, $err:expr) => {{
            let error: PipelineError = $err.into();
            record.failed_stage = Some($stage);
            record.error = Some(error.to_string());
            record.timings.total_s = start.elapsed().as_secs_f64();
            if out.is_dir() {
                write_record(&out, &record);
            }
            return Err(PipelineFailure { stage: $stage, error, record: Box::new(record) });
        }};
    }
    macro_rules! attempt {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) => fail!($stage, err),
            }
        };
    }

    attempt!(
        Stage::Write,
        std::fs::create_dir_all(&out).map_err(|source| PipelineError::Io { path: out.display().to_string(), source })
    );

    let t = Instant::now();
    let snapshot = attempt!(Stage::Interpret, SceneSnapshot::load(scene_path));
    record.scene_id = snapshot.scene_id.clone();
    let analysis = attempt!(Stage::Interpret, backends.interpreter.interpret(&snapshot));
    let prompt = attempt!(Stage::Interpret, formulate_tool_prompt(&analysis.tool_name));
    record.timings.interpret_s = t.elapsed().as_secs_f64();
    record.analysis = Some(analysis.clone());

    let mut genmesh_time = Duration::ZERO;
    let mut validate_time = Duration::ZERO;
    let prepared =
        generate_valid_mesh(backends.generator.as_ref(), &prompt, cfg.max_genmesh_attempts, &mut genmesh_time, &mut validate_time);
    record.timings.genmesh_s = genmesh_time.as_secs_f64();
    record.timings.validate_s = validate_time.as_secs_f64();
    let prepared = match prepared {
        Ok(p) => p,
        Err(e @ PipelineError::ValidationExhausted { .. }) => {
            record.attempts = cfg.max_genmesh_attempts;
            fail!(Stage::Validate, e)
        }
        Err(e) => fail!(Stage::Genmesh, e),
    };
    record.attempts = prepared.attempts;
    record.rejected_defects = prepared.rejected.clone();
    record.fixes = prepared.fixes.clone();

    let t = Instant::now();
    let scaled = attempt!(Stage::Scale, scale_mesh_to_target(&prepared.mesh, analysis.target.approx_size_mm, cfg.fit_ratio));
    let placed = attempt!(Stage::Scale, scaled.placed_on_bed(cfg.printer.bed_size_mm));
    record.tool_extent_mm = Some(placed.bounding_box().extent());
    let (gcode_text, stats) = attempt!(Stage::Slice, fabricate(&placed, cfg));
    record.timings.slice_s = t.elapsed().as_secs_f64();
    record.gcode = Some(stats);

    let mesh_path = out.join(MESH_FILE);
    let gcode_path = out.join(GCODE_FILE);
    attempt!(Stage::Write, write_file(&mesh_path, &serialize_mesh(&placed)));
    attempt!(Stage::Write, write_file(&gcode_path, &gcode_text));
    record.artifacts.mesh = Some(mesh_path);
    record.artifacts.gcode = Some(gcode_path);

    let t = Instant::now();
    let mut world = SimWorld::from_scene(&snapshot, SimWorld::default_workspace());
    let mut task = attempt!(Stage::Control, task.task_for(&analysis.target.name, &world).map_err(PipelineError::Task));
    if let Some(n) = cfg.control.max_steps {
        task.max_steps = n;
    }
    record.task = Some(task.clone());
    let control = ControlConfig {
        hz: cfg.control.hz,
        mode: cfg.control.mode,
        limits: cfg.control.limits,
        seed: cfg.seed,
        episode_id: format!("{}-{}", snapshot.scene_id, task.task_name),
        ..ControlConfig::default()
    };
    let mut policy = (backends.policy)();
    let episode = attempt!(Stage::Control, run_control_loop(policy.as_mut(), &mut world, &task, &control));
    record.timings.control_s = t.elapsed().as_secs_f64();
    record.episode_steps = episode.steps.len();
    record.episode_success = episode.success;

    let episode_path = out.join(EPISODE_FILE);
    attempt!(Stage::Write, save_episode(&episode, &episode_path));
    record.artifacts.episode = Some(episode_path);

    record.success = episode.success;
    if !episode.success {
        record.failed_stage = Some(Stage::Control);
        record.error = Some(match &episode.metadata.error {
            Some(e) => format!("policy error: {e}"),
            None => format!("goal not reached within {} steps", task.max_steps),
        });
    }
    record.timings.total_s = start.elapsed().as_secs_f64();
    write_record(&out, &record);
    Ok(record)
}
