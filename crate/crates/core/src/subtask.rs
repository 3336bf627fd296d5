//! Plan management: decomposition, per-round refinement and advancement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::PageView;
use crate::memory::PageSummary;
use crate::reasoner::{self, Evaluation, Reasoner, ReasonerError};
use crate::replay::Trajectory;

/// Upper bound on the number of subtasks in a plan.
pub const MAX_SUBTASKS: usize = 8;

#[derive(Debug, Error)]
pub enum SubtaskError {
    #[error("intent must not be empty")]
    EmptyIntent,
    #[error("reasoner returned no subtasks")]
    EmptyDecomposition,
    #[error("reasoner failure: {0}")]
    ReasonerFailure(#[from] ReasonerError),
}

/// How completion of a subtask is decided.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredicateSpec {
    /// Completion is whatever the evaluator's `subtask_done` flag says.
    #[default]
    EvaluatorFlag,
    UrlReached {
        url: String,
    },
    KeywordOnPage {
        keyword: String,
    },
}

impl PredicateSpec {
    /// Decides the predicate from the page alone, when it can be.
    pub fn decide_locally(&self, view: &PageView) -> Option<bool> {
        match self {
            PredicateSpec::EvaluatorFlag => None,
            PredicateSpec::UrlReached { url } => Some(&view.url == url),
            PredicateSpec::KeywordOnPage { keyword } => Some(page_mentions(view, keyword)),
        }
    }
}

pub(crate) fn page_mentions(view: &PageView, keyword: &str) -> bool {
    let needle = keyword.to_lowercase();
    view.title.to_lowercase().contains(&needle) || view.dom_text.to_lowercase().contains(&needle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskStatus {
    Pending,
    Active,
    Done,
    Reformulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub index: usize,
    pub objective: String,
    pub predicate: PredicateSpec,
    pub status: SubtaskStatus,
    pub revision: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub intent: String,
    pub subtasks: Vec<Subtask>,
    pub active_index: usize,
    /// Set once the last subtask is done. The last subtask then stays at
    /// `active_index` with status `Done`.
    pub complete: bool,
}

impl Plan {
    pub fn active(&self) -> &Subtask {
        &self.subtasks[self.active_index]
    }

    pub fn is_final_active(&self) -> bool {
        self.active_index + 1 == self.subtasks.len()
    }

    /// Replaces the active subtask with an updated copy of itself.
    pub fn apply_update(&mut self, mut updated: Subtask) {
        assert_eq!(updated.index, self.active_index, "update must target the active subtask");
        if updated.status == SubtaskStatus::Reformulated {
            updated.status = SubtaskStatus::Active;
        }
        self.subtasks[self.active_index] = updated;
    }

    /// Checks the single-active and ordering invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let active: Vec<usize> =
            self.subtasks.iter().filter(|s| s.status == SubtaskStatus::Active).map(|s| s.index).collect();
        if self.complete {
            if !active.is_empty() || self.subtasks.iter().any(|s| s.status != SubtaskStatus::Done) {
                return Err("a complete plan has only done subtasks".into());
            }
            return Ok(());
        }
        if active != [self.active_index] {
            return Err(format!("expected exactly subtask {} active, found {active:?}", self.active_index));
        }
        for s in &self.subtasks {
            let ok = match s.index.cmp(&self.active_index) {
                std::cmp::Ordering::Less => s.status == SubtaskStatus::Done,
                std::cmp::Ordering::Equal => true,
                std::cmp::Ordering::Greater => s.status == SubtaskStatus::Pending,
            };
            if !ok {
                return Err(format!("subtask {} has status {:?}", s.index, s.status));
            }
        }
        Ok(())
    }
}

/// Builds the initial plan. `memory` carries page summaries when re-decomposing
/// after exploration; it is forwarded to the reasoner verbatim.
pub fn decompose<R: Reasoner + ?Sized>(
    intent: &str,
    memory: Option<Vec<PageSummary>>,
    reasoner: &mut R,
) -> Result<Plan, SubtaskError> {
    if intent.trim().is_empty() {
        return Err(SubtaskError::EmptyIntent);
    }
    let drafts = reasoner::request_decomposition(reasoner, intent, memory.unwrap_or_default())?;
    if drafts.is_empty() {
        return Err(SubtaskError::EmptyDecomposition);
    }
    let subtasks = drafts
        .into_iter()
        .take(MAX_SUBTASKS)
        .enumerate()
        .map(|(index, d)| Subtask {
            index,
            objective: d.objective,
            predicate: d.predicate,
            status: if index == 0 { SubtaskStatus::Active } else { SubtaskStatus::Pending },
            revision: 0,
        })
        .collect();
    Ok(Plan { intent: intent.to_string(), subtasks, active_index: 0, complete: false })
}

/// Contextual refinement, run once per exploration round whether or not
/// progress was made. Returns the subtask unchanged or reformulated with
/// `revision + 1`.
pub fn update_subtask<R: Reasoner + ?Sized>(
    u: &Subtask,
    view: &PageView,
    trajectory: &Trajectory,
    reasoner: &mut R,
) -> Result<Subtask, SubtaskError> {
    let objective = reasoner::request_refinement(reasoner, u, view, trajectory)?;
    if objective == u.objective {
        return Ok(u.clone());
    }
    Ok(Subtask { objective, status: SubtaskStatus::Reformulated, revision: u.revision + 1, ..u.clone() })
}

/// Marks the active subtask done and activates the next one when the
/// evaluation reports completion. Otherwise returns the plan unchanged.
pub fn check_and_advance(plan: &Plan, eval: &Evaluation) -> Plan {
    let mut next = plan.clone();
    if plan.complete || !eval.subtask_done {
        return next;
    }
    next.subtasks[plan.active_index].status = SubtaskStatus::Done;
    if plan.is_final_active() {
        next.complete = true;
    } else {
        next.active_index += 1;
        next.subtasks[next.active_index].status = SubtaskStatus::Active;
    }
    next
}
