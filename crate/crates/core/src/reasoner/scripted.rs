//! Deterministic lexical stand-in for an LLM reasoner.
//!
//! Every judgment is a function of token overlap. The tokenizer lowercases
//! and splits on anything that is not alphanumeric; no stemming, no stop
//! words. With `O` the token set of the active objective:
//!
//! | request      | rule |
//! |--------------|------|
//! | evaluate     | `score = |O ∩ tokens(title + dom_text)| / |O|`; `subtask_done` from the predicate (evaluator flag: `score == 1`) |
//! | propose      | each element scores `|O ∩ tokens(label + href)| / |O|`; links/buttons → CLICK, fields with a task input → TYPE, selects → SELECT of the best-overlapping option; sorted by score desc then ref asc; memory-irrelevant signatures dropped; on the final subtask, a page that satisfies its predicate yields STOP first |
//! | decompose    | task hints if given, else the intent split on `;`, ` then `, ` and `; with page summaries, a first subtask revisits the summary page whose title + summary overlaps the intent most (ties: first in url order) |
//! | refine       | unchanged when `O` is covered by the current page or any page of the trajectory, or when already reformulated; otherwise the title/label seen along the trajectory with the largest overlap with `O` (> 0, ties: first seen) |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    ActionProposal, Evaluation, NodeContext, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, SubtaskDraft,
};
use crate::action::{action_signature, Action};
use crate::env::{ElementKind, PageView};
use crate::memory::{PageSummary, Relevance};
use crate::replay::Trajectory;
use crate::subtask::{PredicateSpec, Subtask, MAX_SUBTASKS};

/// Task-file hints consumed by the scripted reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskHints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtasks: Option<Vec<SubtaskDraft>>,
    /// Text to type (or option to select) per element ref.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn token_set(s: &str) -> BTreeSet<String> {
    tokenize(s).into_iter().collect()
}

fn overlap(objective: &BTreeSet<String>, text: &str) -> usize {
    let other = token_set(text);
    objective.intersection(&other).count()
}

fn ratio(objective: &BTreeSet<String>, text: &str) -> f64 {
    if objective.is_empty() {
        return 0.0;
    }
    overlap(objective, text) as f64 / objective.len() as f64
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedReasoner {
    hints: TaskHints,
}

impl ScriptedReasoner {
    pub fn new(hints: TaskHints) -> Self {
        Self { hints }
    }

    pub fn decompose(&self, intent: &str, memory: &[PageSummary]) -> Vec<SubtaskDraft> {
        let mut drafts = match &self.hints.subtasks {
            Some(hinted) => hinted.clone(),
            None => split_intent(intent)
                .into_iter()
                .map(|objective| SubtaskDraft { objective, predicate: PredicateSpec::EvaluatorFlag })
                .collect(),
        };
        let intent_tokens = token_set(intent);
        let best = memory.iter().enumerate().max_by_key(|(i, s)| {
            (overlap(&intent_tokens, &format!("{} {}", s.title, s.progress_summary)), usize::MAX - i)
        });
        if let Some((_, page)) = best {
            drafts.insert(
                0,
                SubtaskDraft {
                    objective: format!("revisit {}", page.title),
                    predicate: PredicateSpec::UrlReached { url: page.url.clone() },
                },
            );
        }
        drafts.truncate(MAX_SUBTASKS);
        drafts
    }

    pub fn evaluate(&self, view: &PageView, subtask: &Subtask) -> Evaluation {
        let objective = token_set(&subtask.objective);
        let page_text = format!("{} {}", view.title, view.dom_text);
        let hits = overlap(&objective, &page_text);
        let score = ratio(&objective, &page_text);
        let subtask_done = subtask.predicate.decide_locally(view).unwrap_or(score >= 1.0);
        Evaluation {
            score,
            subtask_done,
            task_done_hint: false,
            rationale: format!(
                "{} ({}): {hits}/{} objective terms for \"{}\"",
                view.title,
                view.url,
                objective.len(),
                subtask.objective
            ),
        }
    }

    pub fn propose(&self, ctx: &NodeContext, subtask: &Subtask, max: usize) -> Vec<ActionProposal> {
        let objective = token_set(&subtask.objective);
        let suppressed: BTreeSet<&str> = ctx
            .action_memory
            .iter()
            .filter(|e| e.relevance == Relevance::Irrelevant)
            .map(|e| e.signature.as_str())
            .collect();

        let mut scored: Vec<(f64, String, ActionProposal)> = Vec::new();
        for el in &ctx.elements {
            let text = format!("{} {}", el.label, el.href.as_deref().unwrap_or(""));
            let relevance = ratio(&objective, &text);
            let input = self.hints.inputs.get(el.element.as_str());
            let action = match el.kind {
                ElementKind::Link | ElementKind::Button => Action::Click { element: el.element.clone() },
                ElementKind::Field => match input {
                    Some(text) => Action::Type { element: el.element.clone(), text: text.clone() },
                    None => continue,
                },
                ElementKind::Select => {
                    let options = el.options.as_deref().unwrap_or_default();
                    let option = match input {
                        Some(o) if options.contains(o) => o.clone(),
                        _ => match best_option(&objective, options) {
                            Some(o) => o,
                            None => continue,
                        },
                    };
                    Action::Select { element: el.element.clone(), option }
                }
                ElementKind::Draggable => continue,
            };
            scored.push((
                relevance,
                el.element.to_string(),
                ActionProposal {
                    action,
                    rationale: format!("\"{}\" shares {:.0}% of the objective", el.label, relevance * 100.0),
                    relevance,
                },
            ));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

        let mut proposals: Vec<ActionProposal> = Vec::new();
        if ctx.final_subtask && predicate_holds(&subtask.predicate, ctx, &objective) {
            proposals.push(ActionProposal {
                action: Action::Stop { answer: extract_answer(ctx, subtask, &objective) },
                rationale: "final subtask satisfied on this page".into(),
                relevance: 1.0,
            });
        }
        proposals.extend(scored.into_iter().map(|(_, _, p)| p));
        proposals.retain(|p| !suppressed.contains(action_signature(&p.action).as_str()));
        proposals.truncate(max);
        proposals
    }

    pub fn refine(&self, subtask: &Subtask, view: &PageView, trajectory: &Trajectory) -> String {
        let objective = token_set(&subtask.objective);
        let keep = subtask.objective.clone();
        if subtask.revision > 0 || objective.is_empty() {
            return keep;
        }
        let covers = |v: &PageView| {
            let labels: Vec<&str> = v.elements.iter().map(|e| e.label.as_str()).collect();
            let text = format!("{} {} {}", v.title, v.dom_text, labels.join(" "));
            overlap(&objective, &text) == objective.len()
        };
        if covers(view) || trajectory.views.iter().any(covers) {
            return keep;
        }
        let mut labels: Vec<&str> = Vec::new();
        for v in trajectory.views.iter().chain(std::iter::once(view)) {
            for label in std::iter::once(v.title.as_str()).chain(v.elements.iter().map(|e| e.label.as_str())) {
                if !labels.contains(&label) {
                    labels.push(label);
                }
            }
        }
        let mut best: Option<(usize, &str)> = None;
        for label in labels {
            let score = overlap(&objective, label);
            if score > 0 && best.is_none_or(|(s, _)| score > s) {
                best = Some((score, label));
            }
        }
        match best {
            Some((_, label)) if !label.eq_ignore_ascii_case(&subtask.objective) => label.to_string(),
            _ => keep,
        }
    }
}

fn split_intent(intent: &str) -> Vec<String> {
    let mut parts = vec![intent.to_string()];
    for sep in [";", " then ", " and "] {
        parts = parts.iter().flat_map(|p| p.split(sep).map(str::to_string).collect::<Vec<_>>()).collect();
    }
    let parts: Vec<String> = parts.into_iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        vec![intent.trim().to_string()]
    } else {
        parts
    }
}

fn best_option(objective: &BTreeSet<String>, options: &[String]) -> Option<String> {
    let mut best: Option<(usize, &String)> = None;
    for o in options {
        let s = overlap(objective, o);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, o));
        }
    }
    best.map(|(_, o)| o.clone())
}

fn predicate_holds(predicate: &PredicateSpec, ctx: &NodeContext, objective: &BTreeSet<String>) -> bool {
    let page_text = format!("{} {}", ctx.title, ctx.dom_text);
    match predicate {
        PredicateSpec::UrlReached { url } => &ctx.url == url,
        PredicateSpec::KeywordOnPage { keyword } => page_text.to_lowercase().contains(&keyword.to_lowercase()),
        PredicateSpec::EvaluatorFlag => !objective.is_empty() && overlap(objective, &page_text) == objective.len(),
    }
}

/// The page line that best answers the subtask: the one holding the
/// predicate keyword, else the one with the largest objective overlap.
fn extract_answer(ctx: &NodeContext, subtask: &Subtask, objective: &BTreeSet<String>) -> String {
    let lines: Vec<&str> = ctx.dom_text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if let PredicateSpec::KeywordOnPage { keyword } = &subtask.predicate {
        let needle = keyword.to_lowercase();
        if let Some(line) = lines.iter().find(|l| l.to_lowercase().contains(&needle)) {
            return line.to_string();
        }
    }
    let mut best: Option<(usize, &str)> = None;
    for line in &lines {
        let s = overlap(objective, line);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, line));
        }
    }
    best.map(|(_, l)| l.to_string()).unwrap_or_else(|| ctx.title.clone())
}

impl Reasoner for ScriptedReasoner {
    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        Ok(match request {
            ReasonerRequest::Decompose { intent, memory } => ReasonerResponse::Subtasks(self.decompose(intent, memory)),
            ReasonerRequest::Propose { context, subtask, max }
            | ReasonerRequest::BackgroundInfer { context, subtask, max } => {
                ReasonerResponse::Proposals(self.propose(context, subtask, *max))
            }
            ReasonerRequest::Evaluate { view, subtask } => ReasonerResponse::Evaluation(self.evaluate(view, subtask)),
            ReasonerRequest::Refine { subtask, view, trajectory } => {
                ReasonerResponse::Refined { objective: self.refine(subtask, view, trajectory) }
            }
        })
    }
}
