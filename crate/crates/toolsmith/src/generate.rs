//! Mesh generators: the rule-based mock, a wrapper that injects broken
//! attempts, and the remote client.

use std::fmt::Write as _;

use thiserror::Error;
use toolsmith_core::scene::tool_from_prompt;

use crate::wire::{WireClient, WireError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("prompt {0:?} does not name a tool")]
    UnrecognizedPrompt(String),
    #[error("no mock model for tool {0:?}")]
    UnknownTool(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Produces mesh text for a prompt. `attempt` counts from 1.
pub trait MeshGenerator: Send + Sync {
    fn name(&self) -> String;
    fn generate(&self, prompt: &str, attempt: u32) -> Result<String, GenerateError>;
}

/// Outline (x, y) in millimeters, counter-clockwise, convex.
fn tool_outline(tool: &str) -> Option<(Vec<(f64, f64)>, f64)> {
    let outline = match tool {
        "knife" => (
            vec![(0.0, 0.0), (110.0, 0.0), (200.0, 9.0), (200.0, 12.0), (110.0, 24.0), (0.0, 20.0)],
            4.0,
        ),
        "wrench" => (
            vec![(0.0, 4.0), (4.0, 0.0), (146.0, 0.0), (150.0, 4.0), (150.0, 26.0), (146.0, 30.0), (4.0, 30.0), (0.0, 26.0)],
            6.0,
        ),
        "screwdriver" => {
            let pts = (0..8)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 8.0;
                    (80.0 + 80.0 * t.cos(), 12.0 + 12.0 * t.sin())
                })
                .collect();
            (pts, 12.0)
        }
        "hammer" => (vec![(0.0, 0.0), (150.0, 0.0), (150.0, 60.0), (130.0, 70.0), (0.0, 18.0)], 10.0),
        _ => return None,
    };
    Some(outline)
}

/// Mesh text of a straight prism over a convex outline. Caps are written as
/// single polygon faces.
pub fn prism_text(outline: &[(f64, f64)], thickness: f64, comment: &str) -> String {
    let n = outline.len();
    let mut s = format!("# {comment}\n");
    for z in [0.0, thickness] {
        for (x, y) in outline {
            let _ = writeln!(s, "v {x} {y} {z}");
        }
    }
    s.push('f');
    for i in (1..=n).rev() {
        let _ = write!(s, " {i}");
    }
    s.push_str("\nf");
    for i in 1..=n {
        let _ = write!(s, " {}", n + i);
    }
    s.push('\n');
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b, c, d) = (i + 1, j + 1, n + j + 1, n + i + 1);
        let _ = writeln!(s, "f {a} {b} {c}\nf {a} {c} {d}");
    }
    s
}

/// Deterministic stand-in for a text-to-mesh model. Understands prompts of
/// the form `Create a 3D model of a <tool>`.
#[derive(Clone, Debug, Default)]
pub struct MockMeshGenerator;

impl MeshGenerator for MockMeshGenerator {
    fn name(&self) -> String {
        "mock".into()
    }

    fn generate(&self, prompt: &str, _attempt: u32) -> Result<String, GenerateError> {
        let tool = tool_from_prompt(prompt).ok_or_else(|| GenerateError::UnrecognizedPrompt(prompt.to_string()))?;
        let (outline, thickness) = tool_outline(tool).ok_or_else(|| GenerateError::UnknownTool(tool.to_string()))?;
        Ok(prism_text(&outline, thickness, &format!("mock {tool}")))
    }
}

/// Returns a mesh with a missing face for the first `failures` attempts.
#[derive(Clone, Debug)]
pub struct FlakyGenerator<G> {
    pub inner: G,
    pub failures: u32,
}

impl<G: MeshGenerator> MeshGenerator for FlakyGenerator<G> {
    fn name(&self) -> String {
        format!("{}+flaky({})", self.inner.name(), self.failures)
    }

    fn generate(&self, prompt: &str, attempt: u32) -> Result<String, GenerateError> {
        let text = self.inner.generate(prompt, attempt)?;
        if attempt > self.failures {
            return Ok(text);
        }
        let mut dropped = false;
        Ok(text
            .lines()
            .filter(|l| {
                let drop = !dropped && l.starts_with("f ") && l.split_whitespace().count() == 4;
                dropped |= drop;
                !drop
            })
            .map(|l| format!("{l}\n"))
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct RemoteGenerator {
    pub client: WireClient,
    pub max_faces: Option<u32>,
}

impl MeshGenerator for RemoteGenerator {
    fn name(&self) -> String {
        format!("remote:{}", self.client.base_url())
    }

    fn generate(&self, prompt: &str, _attempt: u32) -> Result<String, GenerateError> {
        Ok(self.client.call_genmesh_text(prompt, self.max_faces)?)
    }
}
