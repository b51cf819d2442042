//! Scene snapshots and their interpretation into a tool-generation prompt.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3d;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("scene has no target object")]
    NoTargetObject,
    #[error("no tool is known for object {0:?}")]
    UnknownObject(String),
    #[error("tool name is empty")]
    EmptyToolName,
    #[error("interpreter backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed interpreter response: {0}")]
    MalformedResponse(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    /// Longest extent of the object.
    pub approx_size_mm: f64,
    /// Workspace frame, meters.
    pub position: Vec3d,
    pub color_id: String,
    #[serde(default)]
    pub is_target: bool,
}

/// Structured stand-in for a camera frame: annotated objects instead of pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    pub background_id: String,
    /// Image file path, or `base64:<payload>`. Needed by remote interpreters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: f64,
    /// Ground-truth tool for evaluation fixtures; interpreters ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tool: Option<String>,
}

impl SceneSnapshot {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.scene_id.trim().is_empty() {
            return Err(SceneError::InvalidSnapshot("scene_id is empty".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.name.trim().is_empty() {
                return Err(SceneError::InvalidSnapshot(format!("object {i} has an empty name")));
            }
            if !(o.approx_size_mm > 0.0) || !o.approx_size_mm.is_finite() {
                return Err(SceneError::InvalidSnapshot(format!(
                    "object {:?} has non-positive size {}",
                    o.name, o.approx_size_mm
                )));
            }
            if !o.position.is_finite() {
                return Err(SceneError::InvalidSnapshot(format!("object {:?} has a non-finite position", o.name)));
            }
        }
        if self.objects.iter().filter(|o| o.is_target).count() > 1 {
            return Err(SceneError::InvalidSnapshot("more than one object is marked as target".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.is_target)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let snap: Self = serde_json::from_str(text)
            .map_err(|e| SceneError::Parse { path: "<inline>".into(), message: e.to_string() })?;
        snap.validate()?;
        Ok(snap)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        let snap: Self = serde_json::from_str(&text)
            .map_err(|e| SceneError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        snap.validate()?;
        Ok(snap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneAnalysis {
    pub description: String,
    pub target: SceneObject,
    pub tool_name: String,
    /// Always `formulate_tool_prompt(tool_name)`.
    pub tool_prompt: String,
}

/// `Create a 3D model of a {tool_name}`.
pub fn formulate_tool_prompt(tool_name: &str) -> Result<String, SceneError> {
    let name = tool_name.trim();
    if name.is_empty() {
        return Err(SceneError::EmptyToolName);
    }
    Ok(format!("Create a 3D model of a {name}"))
}

/// Inverse of [`formulate_tool_prompt`]; `None` if the prompt does not
/// follow the template.
pub fn tool_from_prompt(prompt: &str) -> Option<&str> {
    prompt
        .trim()
        .strip_prefix("Create a 3D model of a ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

/// Object name → tool name. Lookups outside the table fail; there is no
/// fallback tool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolTable(BTreeMap<String, String>);

impl Default for ToolTable {
    fn default() -> Self {
        let pairs = [
            ("cake", "knife"),
            ("banana", "knife"),
            ("tomato", "knife"),
            ("cube", "knife"),
            ("bolt", "wrench"),
            ("screw", "screwdriver"),
            ("nail", "hammer"),
        ];
        Self(pairs.iter().map(|(o, t)| (o.to_string(), t.to_string())).collect())
    }
}

impl ToolTable {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        Self(entries)
    }

    /// Flat TOML: `cake = "knife"` per line.
    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        let table: BTreeMap<String, String> =
            toml::from_str(text).map_err(|e| SceneError::Parse { path: "<tool table>".into(), message: e.to_string() })?;
        if let Some((k, _)) = table.iter().find(|(k, v)| k.trim().is_empty() || v.trim().is_empty()) {
            return Err(SceneError::Parse { path: "<tool table>".into(), message: format!("empty entry for {k:?}") });
        }
        Ok(Self(table))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            SceneError::Parse { message, .. } => SceneError::Parse { path: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn lookup(&self, object: &str) -> Result<&str, SceneError> {
        self.0
            .get(&object.trim().to_lowercase())
            .map(String::as_str)
            .ok_or_else(|| SceneError::UnknownObject(object.to_string()))
    }

    pub fn insert(&mut self, object: impl Into<String>, tool: impl Into<String>) {
        self.0.insert(object.into().to_lowercase(), tool.into());
    }

    pub fn objects(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// Something that turns a snapshot into an analysis.
pub trait InterpreterBackend: Send + Sync {
    fn name(&self) -> &str;
    fn interpret(&self, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, SceneError>;
}

pub fn interpret_scene(snapshot: &SceneSnapshot, backend: &(impl InterpreterBackend + ?Sized)) -> Result<SceneAnalysis, SceneError> {
    backend.interpret(snapshot)
}

/// Rule-based interpreter over the structured annotations.
#[derive(Clone, Debug, Default)]
pub struct MockInterpreter {
    pub table: ToolTable,
}

impl MockInterpreter {
    pub fn new(table: ToolTable) -> Self {
        Self { table }
    }
}

impl InterpreterBackend for MockInterpreter {
    fn name(&self) -> &str {
        "mock"
    }

    fn interpret(&self, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, SceneError> {
        snapshot.validate()?;
        let target = snapshot.target().ok_or(SceneError::NoTargetObject)?;
        let tool_name = self.table.lookup(&target.name)?.to_string();
        let tool_prompt = formulate_tool_prompt(&tool_name)?;
        let others: Vec<&str> = snapshot.objects.iter().filter(|o| !o.is_target).map(|o| o.name.as_str()).collect();
        let description = format!(
            "Scene {}: {} object(s) on a {} background. Target is a {} of about {} mm{}; a {} is needed.",
            snapshot.scene_id,
            snapshot.objects.len(),
            snapshot.background_id,
            target.name,
            target.approx_size_mm,
            if others.is_empty() { String::new() } else { format!(", next to {}", others.join(", ")) },
            tool_name
        );
        Ok(SceneAnalysis { description, target: target.clone(), tool_name, tool_prompt })
    }
}

/// Serves previously recorded analyses keyed by scene id, e.g. outputs
/// captured from a real model, including its mistakes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayInterpreter {
    pub analyses: BTreeMap<String, SceneAnalysis>,
}

impl ReplayInterpreter {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let r: Self = serde_json::from_str(text)
            .map_err(|e| SceneError::Parse { path: "<replay>".into(), message: e.to_string() })?;
        for (id, a) in &r.analyses {
            if formulate_tool_prompt(&a.tool_name)? != a.tool_prompt {
                return Err(SceneError::MalformedResponse(format!("recorded prompt for {id} does not match its tool")));
            }
        }
        Ok(r)
    }
}

impl InterpreterBackend for ReplayInterpreter {
    fn name(&self) -> &str {
        "replay"
    }

    fn interpret(&self, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, SceneError> {
        self.analyses
            .get(&snapshot.scene_id)
            .cloned()
            .ok_or_else(|| SceneError::BackendUnavailable(format!("no recording for scene {}", snapshot.scene_id)))
    }
}
