//! The policy/evaluator boundary.
//!
//! Every request and response crosses this boundary as a versioned JSON
//! document, whether it goes to the in-process [`ScriptedReasoner`] or over a
//! socket to a [`RemoteReasoner`]. Responses are validated and clamped by
//! [`validate_response`] before anything reaches the search loop.

mod remote;
mod scripted;

pub use remote::{Endpoint, RemoteConfig, RemoteReasoner};
pub use scripted::{tokenize, ScriptedReasoner, TaskHints};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::action::{parse_action_value, Action};
use crate::env::{ElementSpec, PageView};
use crate::memory::{ActionEntry, CycleRecord, PageMemory, PageSummary};
use crate::replay::Trajectory;
use crate::subtask::{PredicateSpec, Subtask};

pub const WIRE_VERSION: u32 = 1;

/// Default cap on page text sent to a reasoner.
pub const DEFAULT_DOM_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReasonerError {
    #[error("reasoner timed out")]
    Timeout,
    #[error("malformed reasoner response: {0}")]
    MalformedResponse(String),
    #[error("reasoner transport error: {0}")]
    TransportError(String),
}

/// Read-only description of a page for proposal generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeContext {
    pub intent: String,
    pub url: String,
    pub title: String,
    pub dom_text: String,
    pub elements: Vec<ElementSpec>,
    pub form_values: std::collections::BTreeMap<String, String>,
    pub objective: String,
    /// Whether the active subtask is the plan's last one.
    pub final_subtask: bool,
    pub progress_summary: String,
    pub history: Vec<CycleRecord>,
    pub action_memory: Vec<ActionEntry>,
}

impl NodeContext {
    pub fn new(
        view: &PageView,
        intent: &str,
        subtask: &Subtask,
        final_subtask: bool,
        memory: Option<&PageMemory>,
        dom_limit: usize,
    ) -> Self {
        Self {
            intent: intent.to_string(),
            url: view.url.clone(),
            title: view.title.clone(),
            dom_text: truncate_chars(&view.dom_text, dom_limit),
            elements: view.elements.clone(),
            form_values: view.form_values.clone(),
            objective: subtask.objective.clone(),
            final_subtask,
            progress_summary: memory.map(|m| m.progress_summary.clone()).unwrap_or_default(),
            history: memory.map(|m| m.history.clone()).unwrap_or_default(),
            action_memory: memory.map(|m| m.action_memory.clone()).unwrap_or_default(),
        }
    }
}

pub(crate) fn truncate_chars(s: &str, limit: usize) -> String {
    match s.char_indices().nth(limit) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub action: Action,
    pub rationale: String,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub subtask_done: bool,
    pub task_done_hint: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskDraft {
    pub objective: String,
    #[serde(default)]
    pub predicate: PredicateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ReasonerRequest {
    Decompose { intent: String, memory: Vec<PageSummary> },
    Propose { context: NodeContext, subtask: Subtask, max: usize },
    Evaluate { view: PageView, subtask: Subtask },
    Refine { subtask: Subtask, view: PageView, trajectory: Trajectory },
    BackgroundInfer { context: NodeContext, subtask: Subtask, max: usize },
}

impl ReasonerRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            ReasonerRequest::Decompose { .. } => "decompose",
            ReasonerRequest::Propose { .. } => "propose",
            ReasonerRequest::Evaluate { .. } => "evaluate",
            ReasonerRequest::Refine { .. } => "refine",
            ReasonerRequest::BackgroundInfer { .. } => "background_infer",
        }
    }

    fn max_proposals(&self) -> usize {
        match self {
            ReasonerRequest::Propose { max, .. } | ReasonerRequest::BackgroundInfer { max, .. } => *max,
            _ => usize::MAX,
        }
    }

    /// `{"version", "kind", "payload"}` document sent to remote backends.
    pub fn to_document(&self) -> Value {
        let mut doc = serde_json::to_value(self).expect("requests serialize");
        doc["version"] = json!(WIRE_VERSION);
        doc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReasonerResponse {
    Subtasks(Vec<SubtaskDraft>),
    Proposals(Vec<ActionProposal>),
    Evaluation(Evaluation),
    Refined { objective: String },
}

impl ReasonerResponse {
    /// `{"version", "kind", "result"}` document, as a remote backend would send it.
    pub fn to_document(&self, kind: &str) -> Value {
        let result = match self {
            ReasonerResponse::Subtasks(s) => json!({ "subtasks": s }),
            ReasonerResponse::Proposals(p) => json!({ "proposals": p }),
            ReasonerResponse::Evaluation(e) => serde_json::to_value(e).expect("evaluation serializes"),
            ReasonerResponse::Refined { objective } => json!({ "objective": objective }),
        };
        json!({ "version": WIRE_VERSION, "kind": kind, "result": result })
    }
}

pub trait Reasoner {
    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError>;
}

impl<R: Reasoner + ?Sized> Reasoner for Box<R> {
    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        (**self).respond(request)
    }
}

fn malformed(msg: impl Into<String>) -> ReasonerError {
    ReasonerError::MalformedResponse(msg.into())
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Validates a response document against the request that produced it.
///
/// Scores and relevances are clamped into `[0, 1]` and proposal lists are
/// truncated to the requested maximum. Anything missing or mistyped is an error.
pub fn validate_response(request: &ReasonerRequest, doc: &Value) -> Result<ReasonerResponse, ReasonerError> {
    let kind = doc.get("kind").and_then(Value::as_str).ok_or_else(|| malformed("missing `kind`"))?;
    if kind != request.kind() {
        return Err(malformed(format!("expected kind `{}`, got `{kind}`", request.kind())));
    }
    match doc.get("version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(WIRE_VERSION) => {}
        _ => return Err(malformed("missing or unsupported `version`")),
    }
    let result = doc.get("result").ok_or_else(|| malformed("missing `result`"))?;
    let response = match request {
        ReasonerRequest::Decompose { .. } => {
            let list = field(result, "subtasks")?.as_array().ok_or_else(|| malformed("`subtasks` is not a list"))?;
            let drafts = list
                .iter()
                .map(|v| serde_json::from_value::<SubtaskDraft>(v.clone()).map_err(|e| malformed(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            ReasonerResponse::Subtasks(drafts)
        }
        ReasonerRequest::Propose { .. } | ReasonerRequest::BackgroundInfer { .. } => {
            let list = field(result, "proposals")?.as_array().ok_or_else(|| malformed("`proposals` is not a list"))?;
            let proposals = list.iter().map(parse_proposal).collect::<Result<Vec<_>, _>>()?;
            ReasonerResponse::Proposals(proposals)
        }
        ReasonerRequest::Evaluate { .. } => {
            let score = number(result, "score")?;
            let flag = |name: &str| -> Result<bool, ReasonerError> {
                match result.get(name) {
                    None => Ok(false),
                    Some(v) => v.as_bool().ok_or_else(|| malformed(format!("`{name}` is not a boolean"))),
                }
            };
            ReasonerResponse::Evaluation(Evaluation {
                score,
                subtask_done: flag("subtask_done")?,
                task_done_hint: flag("task_done_hint")?,
                rationale: result.get("rationale").and_then(Value::as_str).unwrap_or_default().to_string(),
            })
        }
        ReasonerRequest::Refine { .. } => {
            let objective =
                field(result, "objective")?.as_str().ok_or_else(|| malformed("`objective` is not a string"))?;
            if objective.trim().is_empty() {
                return Err(malformed("empty refined objective"));
            }
            ReasonerResponse::Refined { objective: objective.to_string() }
        }
    };
    Ok(normalize(request, response))
}

/// Clamps scores and truncates proposal lists. Applied to every response.
pub fn normalize(request: &ReasonerRequest, response: ReasonerResponse) -> ReasonerResponse {
    match response {
        ReasonerResponse::Proposals(mut proposals) => {
            proposals.truncate(request.max_proposals());
            for p in &mut proposals {
                p.relevance = clamp_unit(p.relevance);
            }
            ReasonerResponse::Proposals(proposals)
        }
        ReasonerResponse::Evaluation(mut e) => {
            e.score = clamp_unit(e.score);
            ReasonerResponse::Evaluation(e)
        }
        other => other,
    }
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value, ReasonerError> {
    v.get(name).ok_or_else(|| malformed(format!("missing `{name}`")))
}

fn number(v: &Value, name: &str) -> Result<f64, ReasonerError> {
    let x = field(v, name)?.as_f64().ok_or_else(|| malformed(format!("`{name}` is not a number")))?;
    if !x.is_finite() {
        return Err(malformed(format!("`{name}` is not finite")));
    }
    Ok(x)
}

fn parse_proposal(v: &Value) -> Result<ActionProposal, ReasonerError> {
    let action = parse_action_value(field(v, "action")?).map_err(|e| malformed(e.to_string()))?;
    Ok(ActionProposal {
        action,
        rationale: v.get("rationale").and_then(Value::as_str).unwrap_or_default().to_string(),
        relevance: number(v, "relevance")?,
    })
}

fn unexpected(request: &ReasonerRequest) -> ReasonerError {
    malformed(format!("response does not answer a `{}` request", request.kind()))
}

fn call<R: Reasoner + ?Sized>(r: &mut R, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
    let response = r.respond(request)?;
    Ok(normalize(request, response))
}

pub fn request_decomposition<R: Reasoner + ?Sized>(
    r: &mut R,
    intent: &str,
    memory: Vec<PageSummary>,
) -> Result<Vec<SubtaskDraft>, ReasonerError> {
    let req = ReasonerRequest::Decompose { intent: intent.to_string(), memory };
    match call(r, &req)? {
        ReasonerResponse::Subtasks(s) => Ok(s),
        _ => Err(unexpected(&req)),
    }
}

pub fn request_proposals<R: Reasoner + ?Sized>(
    r: &mut R,
    context: &NodeContext,
    subtask: &Subtask,
    max: usize,
    background: bool,
) -> Result<Vec<ActionProposal>, ReasonerError> {
    let req = if background {
        ReasonerRequest::BackgroundInfer { context: context.clone(), subtask: subtask.clone(), max }
    } else {
        ReasonerRequest::Propose { context: context.clone(), subtask: subtask.clone(), max }
    };
    match call(r, &req)? {
        ReasonerResponse::Proposals(p) => Ok(p),
        _ => Err(unexpected(&req)),
    }
}

pub fn request_evaluation<R: Reasoner + ?Sized>(
    r: &mut R,
    view: &PageView,
    subtask: &Subtask,
) -> Result<Evaluation, ReasonerError> {
    let req = ReasonerRequest::Evaluate { view: view.clone(), subtask: subtask.clone() };
    match call(r, &req)? {
        ReasonerResponse::Evaluation(e) => Ok(e),
        _ => Err(unexpected(&req)),
    }
}

pub fn request_refinement<R: Reasoner + ?Sized>(
    r: &mut R,
    subtask: &Subtask,
    view: &PageView,
    trajectory: &Trajectory,
) -> Result<String, ReasonerError> {
    let req = ReasonerRequest::Refine { subtask: subtask.clone(), view: view.clone(), trajectory: trajectory.clone() };
    match call(r, &req)? {
        ReasonerResponse::Refined { objective } => Ok(objective),
        _ => Err(unexpected(&req)),
    }
}
