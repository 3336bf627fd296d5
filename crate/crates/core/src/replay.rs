//! Nearest-URL state replay.
//!
//! To restore the state at trajectory index `j`, load the URL of the closest
//! cacheable index `c <= j` and re-execute only `a_c .. a_{j-1}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::env::{self, client_hash, EnvState, PageView, SiteGraph, StateDigest, StepError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("index {index} out of range for a trajectory of {len} views")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("replay to index {index} diverged: expected {expected}, got {actual}")]
    ReplayDivergence { index: usize, expected: StateDigest, actual: StateDigest },
    #[error("replay step failed: {0}")]
    Step(#[from] StepError),
}

/// `(o_0, a_0, o_1, ..., o_t)` with a cacheability flag per view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub views: Vec<PageView>,
    pub actions: Vec<Action>,
    pub cacheable: Vec<bool>,
}

impl Trajectory {
    pub fn root(view: PageView) -> Self {
        Self { views: vec![view], actions: Vec::new(), cacheable: vec![true] }
    }

    /// Number of views (`t + 1`).
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn last_view(&self) -> &PageView {
        self.views.last().expect("a trajectory always has a root view")
    }

    /// Appends `(action, view)`. A state is cacheable iff it was reached by
    /// navigation and consists of one tab with no form values.
    pub fn push(&mut self, action: Action, view: PageView, navigated: bool) {
        let cacheable = navigated && view.tab_count == 1 && view.form_values.is_empty();
        self.actions.push(action);
        self.views.push(view);
        self.cacheable.push(cacheable);
    }

    pub fn extended(&self, action: Action, view: PageView, navigated: bool) -> Self {
        let mut next = self.clone();
        next.push(action, view, navigated);
        next
    }
}

/// `max { c <= j : cacheable[c] }`.
pub fn nearest_checkpoint(tau: &Trajectory, j: usize) -> Result<usize, ReplayError> {
    if j >= tau.len() {
        return Err(ReplayError::IndexOutOfRange { index: j, len: tau.len() });
    }
    Ok((0..=j).rev().find(|&c| tau.cacheable[c]).unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub state: EnvState,
    pub checkpoint: usize,
    /// Actions re-executed after the load (`j - checkpoint`).
    pub replayed: usize,
}

impl ReplayOutcome {
    /// Environment operations spent: one load plus the re-executed actions.
    pub fn cost(&self) -> usize {
        1 + self.replayed
    }
}

/// Restores the state at index `j` via the nearest cacheable checkpoint.
///
/// `live` supplies the server-side world store, which a load never resets.
pub fn replay(live: &EnvState, graph: &SiteGraph, tau: &Trajectory, j: usize) -> Result<ReplayOutcome, ReplayError> {
    let c = nearest_checkpoint(tau, j)?;
    replay_from(live, graph, tau, c, j)
}

/// Restores index `j` by loading the root URL and re-executing every action.
pub fn full_reexecution(
    live: &EnvState,
    graph: &SiteGraph,
    tau: &Trajectory,
    j: usize,
) -> Result<ReplayOutcome, ReplayError> {
    if j >= tau.len() {
        return Err(ReplayError::IndexOutOfRange { index: j, len: tau.len() });
    }
    replay_from(live, graph, tau, 0, j)
}

fn replay_from(
    live: &EnvState,
    graph: &SiteGraph,
    tau: &Trajectory,
    c: usize,
    j: usize,
) -> Result<ReplayOutcome, ReplayError> {
    let anchor = &tau.views[c];
    let mut state = env::load_url(&live.world, graph, &anchor.url, &anchor.back_urls, &anchor.forward_urls)?;
    for action in &tau.actions[c..j] {
        state = env::step(&state, graph, action)?.state;
    }
    let expected = &tau.views[j].client_digest;
    let actual = client_hash(&state);
    if &actual != expected {
        return Err(ReplayError::ReplayDivergence { index: j, expected: expected.clone(), actual });
    }
    Ok(ReplayOutcome { state, checkpoint: c, replayed: j - c })
}
