//! RLDS-style episode recording and the on-disk dataset layout.
//!
//! A dataset directory holds one JSON file per episode
//! (`episode_<id>.json`) and a `manifest.json` index. Both carry
//! `schema_version`. Step flags follow RLDS: `is_first` on the first step,
//! `is_last` on the final step, `is_terminal` only when the final step
//! reached the goal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionVector7, ManipulatorState};

pub const EPISODE_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("episode is finalized; no more steps can be recorded")]
    EpisodeFinalized,
    #[error("episode must be finalized before saving")]
    NotFinalized,
    #[error("episode has no steps")]
    EmptyEpisode,
    #[error("step instruction {got:?} differs from episode instruction {expected:?}")]
    InstructionMismatch { expected: String, got: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: schema violation: {reason}")]
    SchemaViolation { path: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepObservation {
    pub state: ManipulatorState,
    /// Path of the camera frame relative to the dataset directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: StepObservation,
    pub action: ActionVector7,
    pub instruction: String,
    pub is_first: bool,
    pub is_last: bool,
    pub is_terminal: bool,
    pub reward: f64,
}

impl Step {
    /// A step with flags and reward cleared; the episode manages them.
    pub fn new(observation: StepObservation, action: ActionVector7, instruction: impl Into<String>) -> Self {
        Self {
            observation,
            action,
            instruction: instruction.into(),
            is_first: false,
            is_last: false,
            is_terminal: false,
            reward: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub hz: f64,
    pub world_seed: u64,
    pub policy: String,
    /// Seconds since the Unix epoch.
    pub created_at: f64,
    #[serde(default)]
    pub wall_seconds: f64,
    /// Set when the rollout was aborted by a policy error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub schema_version: u32,
    pub episode_id: String,
    pub task_name: String,
    pub instruction: String,
    pub steps: Vec<Step>,
    pub success: bool,
    /// State after the last action.
    pub final_state: Option<ManipulatorState>,
    pub metadata: EpisodeMetadata,
    #[serde(skip)]
    finalized: bool,
}

impl Episode {
    pub fn new(
        episode_id: impl Into<String>,
        task_name: impl Into<String>,
        instruction: impl Into<String>,
        metadata: EpisodeMetadata,
    ) -> Self {
        Self {
            schema_version: EPISODE_SCHEMA_VERSION,
            episode_id: episode_id.into(),
            task_name: task_name.into(),
            instruction: instruction.into(),
            steps: Vec::new(),
            success: false,
            final_state: None,
            metadata,
            finalized: false,
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends a step, setting `is_first` on the first one and clearing the
    /// other flags.
    pub fn record_step(&mut self, mut step: Step) -> Result<(), EpisodeError> {
        if self.finalized {
            return Err(EpisodeError::EpisodeFinalized);
        }
        if step.instruction != self.instruction {
            return Err(EpisodeError::InstructionMismatch { expected: self.instruction.clone(), got: step.instruction });
        }
        step.is_first = self.steps.is_empty();
        step.is_last = false;
        step.is_terminal = false;
        step.reward = 0.0;
        self.steps.push(step);
        Ok(())
    }

    /// Marks the last step and freezes the episode. A successful episode's
    /// last step is terminal with reward 1.
    pub fn finalize(&mut self, success: bool, final_state: ManipulatorState) -> Result<(), EpisodeError> {
        if self.finalized {
            return Err(EpisodeError::EpisodeFinalized);
        }
        let last = self.steps.last_mut().ok_or(EpisodeError::EmptyEpisode)?;
        last.is_last = true;
        last.is_terminal = success;
        last.reward = if success { 1.0 } else { 0.0 };
        self.success = success;
        self.final_state = Some(final_state);
        self.finalized = true;
        Ok(())
    }

    /// Same trajectory and outcome, ignoring timing metadata.
    pub fn same_rollout(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.success == other.success
            && self.final_state == other.final_state
            && self.instruction == other.instruction
            && self.task_name == other.task_name
    }

    /// Checks the flag, reward and instruction invariants.
    pub fn check_schema(&self) -> Result<(), String> {
        if self.schema_version != EPISODE_SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.steps.is_empty() {
            return Err("episode has no steps".into());
        }
        let n = self.steps.len();
        for (i, s) in self.steps.iter().enumerate() {
            if s.is_first != (i == 0) {
                return Err(format!("step {i}: is_first must be set on the first step only"));
            }
            if s.is_last != (i == n - 1) {
                return Err(format!("step {i}: is_last must be set on the final step only"));
            }
            if s.is_terminal && !s.is_last {
                return Err(format!("step {i}: is_terminal without is_last"));
            }
            if s.instruction != self.instruction {
                return Err(format!("step {i}: instruction differs from the episode's"));
            }
            let expected_reward = if s.is_terminal { 1.0 } else { 0.0 };
            if s.reward != expected_reward {
                return Err(format!("step {i}: reward {} should be {expected_reward}", s.reward));
            }
            if s.action.to_array().iter().any(|v| !v.is_finite()) {
                return Err(format!("step {i}: non-finite action"));
            }
        }
        if self.success != self.steps[n - 1].is_terminal {
            return Err("success flag disagrees with the terminal step".into());
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Io { path: path.display().to_string(), source }
}

/// Writes pretty JSON. Saving the same episode twice gives identical bytes.
pub fn save_episode(episode: &Episode, path: impl AsRef<Path>) -> Result<(), EpisodeError> {
    let path = path.as_ref();
    if !episode.finalized {
        return Err(EpisodeError::NotFinalized);
    }
    let mut text = serde_json::to_string_pretty(episode).expect("episode serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_episode(path: impl AsRef<Path>) -> Result<Episode, EpisodeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let violation = |reason: String| EpisodeError::SchemaViolation { path: path.display().to_string(), reason };
    let mut ep: Episode = serde_json::from_str(&text).map_err(|e| violation(e.to_string()))?;
    ep.check_schema().map_err(violation)?;
    ep.finalized = true;
    Ok(ep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub episode_id: String,
    pub task_name: String,
    pub steps: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub episodes: Vec<ManifestEntry>,
}

/// File name for an episode within a dataset directory.
pub fn episode_file_name(episode_id: &str) -> String {
    let safe: String = episode_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("episode_{safe}.json")
}

/// Saves an episode into `dir` and rewrites the manifest.
pub fn write_to_dataset(dir: impl AsRef<Path>, episode: &Episode) -> Result<PathBuf, EpisodeError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let file = episode_file_name(&episode.episode_id);
    let path = dir.join(&file);
    save_episode(episode, &path)?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = match fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str::<Manifest>(&text).map_err(|e| EpisodeError::SchemaViolation {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?,
        Err(_) => Manifest { schema_version: EPISODE_SCHEMA_VERSION, episodes: Vec::new() },
    };
    manifest.episodes.retain(|e| e.file != file);
    manifest.episodes.push(ManifestEntry {
        file,
        episode_id: episode.episode_id.clone(),
        task_name: episode.task_name.clone(),
        steps: episode.steps.len(),
        success: episode.success,
    });
    manifest.episodes.sort_by(|a, b| a.file.cmp(&b.file));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(path)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub episode_count: usize,
    pub per_task_counts: BTreeMap<String, usize>,
    pub success_count: usize,
    pub mean_steps: f64,
}

/// Summary of the readable episodes in a directory plus one error per
/// unreadable episode file.
///
/// Walks `*.json` files other than the manifest. Files added while the walk
/// runs may or may not be counted.
pub fn summarize_dataset(dir: impl AsRef<Path>) -> Result<(DatasetSummary, Vec<EpisodeError>), EpisodeError> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE)
        })
        .collect();
    files.sort();

    let mut summary = DatasetSummary::default();
    let mut problems = Vec::new();
    let mut total_steps: u64 = 0;
    for f in files {
        match load_episode(&f) {
            Ok(ep) => {
                summary.episode_count += 1;
                *summary.per_task_counts.entry(ep.task_name.clone()).or_default() += 1;
                summary.success_count += usize::from(ep.success);
                total_steps += ep.steps.len() as u64;
            }
            Err(e) => problems.push(e),
        }
    }
    if summary.episode_count > 0 {
        summary.mean_steps = total_steps as f64 / summary.episode_count as f64;
    }
    Ok((summary, problems))
}

/// Fine-tuning hyperparameters handed to the external training script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub schema_version: u32,
    pub base_model: String,
    pub lora_rank: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub grad_steps: u32,
    pub image_augmentation: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            schema_version: 1,
            base_model: "openvla/openvla-7b".into(),
            lora_rank: 32,
            batch_size: 16,
            learning_rate: 5e-4,
            grad_steps: 4000,
            image_augmentation: false,
        }
    }
}

pub fn export_training_config() -> TrainingConfig {
    TrainingConfig::default()
}

impl TrainingConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
