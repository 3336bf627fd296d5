//! Offline look-ahead over frontier nodes.
//!
//! Proposals for unexplored nodes are scored from a read-only context. Only a
//! CLICK on a link with an explicit href is simulated ahead of time, on a
//! scratch copy of the node's state. Everything else waits until the node is
//! focused by the main loop.

use crate::action::{action_signature, Action};
use crate::env::{follow_link, observe, EnvState, PageView, SiteGraph};
use crate::memory::Relevance;
use crate::reasoner::{request_proposals, NodeContext, Reasoner, ReasonerError};
use crate::search::{Frontier, NewChild, NodeId, Tree};
use crate::subtask::Subtask;

/// A frontier node as seen by the background step.
#[derive(Debug, Clone)]
pub struct SnapshotEntry {
    pub node: NodeId,
    pub value: f64,
    pub context: NodeContext,
    pub subtask: Subtask,
    pub state: EnvState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub view: PageView,
    pub state: EnvState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundProposal {
    pub node: NodeId,
    pub action: Action,
    pub relevance: f64,
    pub pre_expandable: bool,
    /// Present iff `pre_expandable`.
    pub simulated: Option<Simulation>,
}

impl BackgroundProposal {
    pub fn simulated_view(&self) -> Option<&PageView> {
        self.simulated.as_ref().map(|s| &s.view)
    }
}

#[derive(Debug, Default)]
pub struct BackgroundOutcome {
    pub proposals: Vec<BackgroundProposal>,
    /// Pre-expansions performed.
    pub used: usize,
    pub failures: Vec<(NodeId, ReasonerError)>,
}

/// The href target of `action` if it can be simulated without the live page.
pub fn link_target<'a>(action: &Action, ctx: &'a NodeContext) -> Option<&'a str> {
    let Action::Click { element } = action else { return None };
    ctx.elements.iter().find(|e| &e.element == element)?.href.as_deref()
}

pub fn is_pre_expandable(action: &Action, ctx: &NodeContext) -> bool {
    link_target(action, ctx).is_some()
}

/// One background pass. Nodes are visited by descending value; each
/// simulated link-follow costs one unit of `budget`. `known(node, action,
/// target_url)` filters proposals the caller already has.
pub fn background_step<R: Reasoner + ?Sized>(
    entries: &[SnapshotEntry],
    graph: &SiteGraph,
    reasoner: &mut R,
    budget: usize,
    max_per_node: usize,
    known: &dyn Fn(NodeId, &Action, Option<&str>) -> bool,
) -> BackgroundOutcome {
    let mut out = BackgroundOutcome::default();
    if budget == 0 {
        return out;
    }
    let mut order: Vec<&SnapshotEntry> = entries.iter().collect();
    order.sort_by(|a, b| b.value.total_cmp(&a.value));

    for entry in order {
        if out.used >= budget {
            break;
        }
        let proposals = match request_proposals(reasoner, &entry.context, &entry.subtask, max_per_node, true) {
            Ok(p) => p,
            Err(e) => {
                out.failures.push((entry.node, e));
                continue;
            }
        };
        for p in proposals {
            let signature = action_signature(&p.action);
            let irrelevant = entry
                .context
                .action_memory
                .iter()
                .any(|m| m.signature == signature && m.relevance == Relevance::Irrelevant);
            let target = link_target(&p.action, &entry.context);
            if irrelevant || known(entry.node, &p.action, target) {
                continue;
            }
            let simulated = match (&p.action, target) {
                (Action::Click { element }, Some(_)) if out.used < budget => {
                    match follow_link(&entry.state, graph, element) {
                        Ok(state) => {
                            out.used += 1;
                            Some(Simulation { view: observe(&state, graph), state })
                        }
                        Err(_) => None,
                    }
                }
                _ => None,
            };
            if target.is_some() && simulated.is_none() {
                // Out of budget or a dangling href: not worth a deferred hint.
                continue;
            }
            out.proposals.push(BackgroundProposal {
                node: entry.node,
                pre_expandable: simulated.is_some(),
                action: p.action,
                relevance: p.relevance,
                simulated,
            });
        }
    }
    out
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct MergeSummary {
    pub added: Vec<NodeId>,
    pub dropped: usize,
    pub hinted: Vec<NodeId>,
}

/// Turns simulated proposals into pre-expanded children and attaches the
/// rest as hints on their node. Children whose `(url, signature)` pair
/// already exists in the tree are dropped.
pub fn merge_proposals(
    tree: &mut Tree,
    frontier: &mut Frontier,
    proposals: Vec<BackgroundProposal>,
    subtask: &Subtask,
) -> MergeSummary {
    let mut summary = MergeSummary::default();
    for p in proposals {
        let signature = action_signature(&p.action);
        match p.simulated {
            Some(sim) => {
                if tree.child_by_signature(p.node, &signature).is_some() || tree.pair_seen(&sim.view.url, &signature) {
                    summary.dropped += 1;
                    continue;
                }
                let id = tree.add_child(
                    p.node,
                    NewChild {
                        action: p.action,
                        view: sim.view,
                        navigated: true,
                        state: sim.state,
                        value: p.relevance,
                        subtask: subtask.clone(),
                        pre_expanded: true,
                    },
                );
                frontier.insert(id, p.relevance);
                summary.added.push(id);
            }
            None => {
                let node = tree.node_mut(p.node);
                if !node.hints.iter().any(|h| action_signature(h) == signature) {
                    node.hints.push(p.action);
                    if !summary.hinted.contains(&p.node) {
                        summary.hinted.push(p.node);
                    }
                }
            }
        }
    }
    summary
}

/// Moves hinted actions to the front, in hint order.
pub fn apply_hints<T>(items: Vec<T>, hints: &[Action], action_of: impl Fn(&T) -> &Action) -> Vec<T> {
    let hint_sigs: Vec<String> = hints.iter().map(action_signature).collect();
    let rank = |item: &T| {
        let sig = action_signature(action_of(item));
        hint_sigs.iter().position(|h| *h == sig).unwrap_or(usize::MAX)
    };
    let mut indexed: Vec<(usize, usize, T)> = items.into_iter().enumerate().map(|(i, t)| (rank(&t), i, t)).collect();
    indexed.sort_by_key(|(r, i, _)| (*r, *i));
    indexed.into_iter().map(|(_, _, t)| t).collect()
}
