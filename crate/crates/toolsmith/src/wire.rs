//! HTTP clients for remote model backends.
//!
//! Endpoints (JSON bodies):
//! `POST /v1/interpret`, `POST /v1/genmesh`, `POST /v1/act`, `GET /v1/health`.
//! Error responses carry `{"error": {"code", "message"}}` with a 4xx or 5xx
//! status. Every response is validated before it is returned.

use std::io::Read;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toolsmith_core::action::{
    ActionLimits, ActionVector7, ObjectSummary, Observation, Policy, PolicyError, TaskSpec,
};
use toolsmith_core::mesh::{parse_mesh_text, MeshError};
use toolsmith_core::scene::{formulate_tool_prompt, InterpreterBackend, SceneAnalysis, SceneError, SceneObject, SceneSnapshot};
use toolsmith_core::{Mesh, Vec3d};

/// Longest response body excerpt kept in errors.
pub const BODY_EXCERPT_CHARS: usize = 200;
const MAX_BODY_BYTES: u64 = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("request to {url} timed out")]
    Timeout { url: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("mesh text rejected: {0}")]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretRequest {
    pub scene: SceneSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireTarget {
    pub name: String,
    pub size_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretResponse {
    pub description: String,
    pub target: WireTarget,
    pub tool_name: String,
    pub tool_prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenmeshRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_faces: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenmeshResponse {
    pub mesh_text: String,
}

/// Observation as sent to a remote policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    /// `[x, y, z, roll, pitch, yaw, grip]`.
    pub state: [f64; 7],
    pub objects: Vec<ObjectSummary>,
    pub background_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

impl WireObservation {
    pub fn from_observation(obs: &Observation) -> Result<Self, WireError> {
        Ok(Self {
            state: obs.state.to_array(),
            objects: obs.objects.clone(),
            background_id: obs.background_id.clone(),
            image_b64: obs.image_ref.as_deref().map(image_payload).transpose()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActRequest {
    pub observation: WireObservation,
    pub instruction: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

/// Base64 payload for an image reference: inline `base64:<data>` or a file path.
pub fn image_payload(image_ref: &str) -> Result<String, WireError> {
    if let Some(data) = image_ref.strip_prefix("base64:") {
        return Ok(data.to_string());
    }
    let bytes = std::fs::read(image_ref).map_err(|e| WireError::BadRequest(format!("reading image {image_ref}: {e}")))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(BODY_EXCERPT_CHARS).collect();
    if body.chars().count() > BODY_EXCERPT_CHARS {
        s.push_str("...");
    }
    s
}

/// Validates an interpret response and resolves its target against the
/// snapshot (position and color come from the matching object, if any).
pub fn decode_interpret_response(body: &str, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, WireError> {
    let r: InterpretResponse = serde_json::from_str(body).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
    if r.tool_name.trim().is_empty() {
        return Err(WireError::MalformedResponse("tool_name is empty".into()));
    }
    let expected = formulate_tool_prompt(&r.tool_name).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
    if r.tool_prompt != expected {
        return Err(WireError::MalformedResponse(format!("tool_prompt {:?} does not match tool_name", r.tool_prompt)));
    }
    if r.target.name.trim().is_empty() || !(r.target.size_mm > 0.0 && r.target.size_mm.is_finite()) {
        return Err(WireError::MalformedResponse("target needs a name and a positive size_mm".into()));
    }
    let known = snapshot.objects.iter().find(|o| o.name == r.target.name);
    let target = SceneObject {
        name: r.target.name.clone(),
        approx_size_mm: r.target.size_mm,
        position: known.map_or(Vec3d::zero(), |o| o.position),
        color_id: known.map_or_else(String::new, |o| o.color_id.clone()),
        is_target: true,
    };
    Ok(SceneAnalysis { description: r.description, target, tool_name: r.tool_name, tool_prompt: r.tool_prompt })
}

pub fn decode_genmesh_response(body: &str) -> Result<String, WireError> {
    let r: GenmeshResponse = serde_json::from_str(body).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
    Ok(r.mesh_text)
}

/// Parses `{"action": [7 numbers]}`, rejects wrong arity or non-finite
/// values, then clamps each component to `limits`.
pub fn decode_act_response(body: &str, limits: &ActionLimits) -> Result<ActionVector7, WireError> {
    #[derive(Deserialize)]
    struct Raw {
        action: Vec<serde_json::Value>,
    }
    let raw: Raw = serde_json::from_str(body).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
    let values = raw
        .action
        .iter()
        .enumerate()
        .map(|(i, v)| v.as_f64().ok_or_else(|| WireError::MalformedResponse(format!("action[{i}] is not a number"))))
        .collect::<Result<Vec<f64>, _>>()?;
    let action = ActionVector7::from_slice(&values).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
    Ok(action.clamped(limits))
}

/// Blocking client for one backend base URL. Cheap to clone; clones share
/// the connection pool and may be used from several threads.
#[derive(Clone, Debug)]
pub struct WireClient {
    base_url: String,
    agent: ureq::Agent,
}

impl WireClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn read_body(resp: ureq::Response) -> Result<String, WireError> {
        let mut body = String::new();
        resp.into_reader()
            .take(MAX_BODY_BYTES)
            .read_to_string(&mut body)
            .map_err(|e| WireError::MalformedResponse(format!("reading body: {e}")))?;
        Ok(body)
    }

    fn map_err(&self, url: &str, err: ureq::Error) -> WireError {
        match err {
            ureq::Error::Status(status, resp) => {
                let body = Self::read_body(resp).unwrap_or_default();
                let shown = serde_json::from_str::<ErrorBody>(&body)
                    .map(|e| format!("{}: {}", e.error.code, e.error.message))
                    .unwrap_or(body);
                WireError::Http { status, body: excerpt(&shown) }
            }
            ureq::Error::Transport(t) => {
                let timed_out = {
                    let mut src: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(&t);
                    let mut found = false;
                    while let Some(e) = src {
                        if let Some(io) = e.downcast_ref::<std::io::Error>() {
                            found |= matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock);
                        }
                        src = e.source();
                    }
                    found || t.to_string().to_ascii_lowercase().contains("timed out")
                };
                if timed_out {
                    WireError::Timeout { url: url.to_string() }
                } else {
                    WireError::Unavailable(format!("{url}: {t}"))
                }
            }
        }
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<String, WireError> {
        let url = self.url(path);
        let payload = serde_json::to_string(body).map_err(|e| WireError::BadRequest(e.to_string()))?;
        let resp = self
            .agent
            .post(&url)
            .set("Content-Type", "application/json")
            .send_string(&payload)
            .map_err(|e| self.map_err(&url, e))?;
        Self::read_body(resp)
    }

    pub fn health(&self) -> Result<HealthResponse, WireError> {
        let url = self.url("/v1/health");
        let resp = self.agent.get(&url).call().map_err(|e| self.map_err(&url, e))?;
        let body = Self::read_body(resp)?;
        let h: HealthResponse = serde_json::from_str(&body).map_err(|e| WireError::MalformedResponse(e.to_string()))?;
        if h.status != "ok" {
            return Err(WireError::Unavailable(format!("health status {:?}", h.status)));
        }
        Ok(h)
    }

    /// Requires `snapshot.image_ref`.
    pub fn call_interpret(&self, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, WireError> {
        let image = snapshot
            .image_ref
            .as_deref()
            .ok_or_else(|| WireError::BadRequest("remote interpretation needs scene.image_ref".into()))?;
        let req = InterpretRequest { scene: snapshot.clone(), image_b64: Some(image_payload(image)?) };
        let body = self.post("/v1/interpret", &req)?;
        decode_interpret_response(&body, snapshot)
    }

    pub fn call_genmesh_text(&self, prompt: &str, max_faces: Option<u32>) -> Result<String, WireError> {
        let body = self.post("/v1/genmesh", &GenmeshRequest { prompt: prompt.to_string(), max_faces })?;
        decode_genmesh_response(&body)
    }

    pub fn call_genmesh(&self, prompt: &str, max_faces: Option<u32>) -> Result<Mesh, WireError> {
        Ok(parse_mesh_text(&self.call_genmesh_text(prompt, max_faces)?)?)
    }

    pub fn call_act(
        &self,
        observation: &Observation,
        instruction: &str,
        limits: &ActionLimits,
    ) -> Result<ActionVector7, WireError> {
        let req = ActRequest {
            observation: WireObservation::from_observation(observation)?,
            instruction: instruction.to_string(),
        };
        let body = self.post("/v1/act", &req)?;
        decode_act_response(&body, limits)
    }
}

/// Scene interpreter served over the wire.
#[derive(Clone, Debug)]
pub struct RemoteInterpreter {
    pub client: WireClient,
}

impl InterpreterBackend for RemoteInterpreter {
    fn name(&self) -> &str {
        "remote"
    }

    fn interpret(&self, snapshot: &SceneSnapshot) -> Result<SceneAnalysis, SceneError> {
        self.client.call_interpret(snapshot).map_err(|e| match e {
            WireError::MalformedResponse(m) => SceneError::MalformedResponse(m),
            WireError::BadRequest(m) => SceneError::InvalidSnapshot(m),
            other => SceneError::BackendUnavailable(other.to_string()),
        })
    }
}

/// Policy served over the wire.
#[derive(Clone, Debug)]
pub struct RemotePolicy {
    pub client: WireClient,
    pub limits: ActionLimits,
}

impl Policy for RemotePolicy {
    fn name(&self) -> String {
        format!("remote:{}", self.client.base_url())
    }

    fn reset(&mut self, _task: &TaskSpec, _seed: u64) {}

    fn predict(&mut self, observation: &Observation, instruction: &str) -> Result<ActionVector7, PolicyError> {
        self.client.call_act(observation, instruction, &self.limits).map_err(|e| match e {
            WireError::MalformedResponse(m) => PolicyError::MalformedResponse(m),
            other => PolicyError::BackendUnavailable(other.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn act_decoding() {
        let l = ActionLimits::default();
        assert_eq!(decode_act_response(r#"{"action":[0,0,0,0,0,0,0]}"#, &l).unwrap(), ActionVector7::zero());
        let a = decode_act_response(r#"{"action":[0.5,0,0,0,0,0,-3]}"#, &l).unwrap();
        assert_eq!(a.dx, 0.02);
        assert_eq!(a.dgrip, -1.0);
        for bad in [r#"{"action":[0,0,0,0,0,0]}"#, r#"{"action":[0,0,0,0,0,0,"x"]}"#, r#"{"act":[]}"#, "[]", ""] {
            assert!(matches!(decode_act_response(bad, &l), Err(WireError::MalformedResponse(_))), "{bad}");
        }
    }

    #[test]
    fn interpret_decoding_checks_prompt() {
        let snap = SceneSnapshot::from_json(
            r#"{"scene_id":"s","objects":[{"name":"cake","approx_size_mm":120,"position":[0.1,0,0.04],"color_id":"white","is_target":true}],"background_id":"t"}"#,
        )
        .unwrap();
        let ok = r#"{"description":"d","target":{"name":"cake","size_mm":120},"tool_name":"knife","tool_prompt":"Create a 3D model of a knife"}"#;
        let a = decode_interpret_response(ok, &snap).unwrap();
        assert_eq!(a.target.position, Vec3d::new(0.1, 0.0, 0.04));
        let wrong = ok.replace("of a knife", "of a spoon");
        assert!(matches!(decode_interpret_response(&wrong, &snap), Err(WireError::MalformedResponse(_))));
        let neg = ok.replace("120", "-1");
        assert!(decode_interpret_response(&neg, &snap).is_err());
    }

    #[test]
    fn excerpt_is_bounded() {
        let long = "x".repeat(1000);
        assert_eq!(excerpt(&long).len(), BODY_EXCERPT_CHARS + 3);
    }
}
