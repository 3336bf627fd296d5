use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frontier::{prune, Frontier, NodeId, PruneReason};
use super::trace::{BackgroundNote, PlanNote, ProposalNote, Trace, TraceEvent, TRACE_SCHEMA_VERSION};
use super::tree::{NewChild, Tree};
use crate::action::{action_signature, Action};
use crate::background::{apply_hints, background_step, link_target, merge_proposals, SnapshotEntry};
use crate::env::{self, client_hash, goal_check, observe, state_hash, EnvState, PageView, SiteGraph};
use crate::memory::{CycleInput, MemoryError, MemoryStore, Objective, Relevance};
use crate::reasoner::{
    request_evaluation, request_proposals, ActionProposal, Evaluation, NodeContext, Reasoner, ReasonerError,
    DEFAULT_DOM_LIMIT,
};
use crate::replay::{full_reexecution, replay, ReplayError, Trajectory};
use crate::subtask::{check_and_advance, decompose, update_subtask, Plan, SubtaskError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum node depth `d`.
    pub depth: usize,
    /// Maximum children per expansion `b`.
    pub branch: usize,
    /// Main-loop environment actions `c`.
    pub budget: usize,
    pub background_budget: usize,
    /// Frontier entries scoring below this are pruned.
    pub epsilon: f64,
    pub seed: u64,
    /// Refocus by nearest-URL replay; otherwise re-execute from the root.
    pub replay: bool,
}

impl SearchConfig {
    /// `d`, `b`, `c` with the background budget equal to `c`.
    pub fn new(depth: usize, branch: usize, budget: usize) -> Self {
        Self { depth, branch, budget, background_budget: budget, epsilon: 0.1, seed: 0, replay: true }
    }

    pub fn is_linear(&self) -> bool {
        self.depth == 0 && self.branch == 1
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.branch < 1 {
            return Err(SearchError::InvalidConfig("branch must be at least 1".into()));
        }
        if self.budget < 1 {
            return Err(SearchError::InvalidConfig("budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(SearchError::InvalidConfig("epsilon must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::new(5, 5, 10)
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Subtask(#[from] SubtaskError),
    #[error("reasoner failure: {0}")]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTask {
    pub id: String,
    pub intent: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Completed reason/act/evaluate cycles, including takeovers of
    /// pre-expanded children.
    pub cycles: usize,
    /// Main-loop environment actions; never exceeds the budget.
    pub env_actions: usize,
    /// Actions re-executed by nearest-URL replay.
    pub replayed_actions: usize,
    /// Environment operations spent restoring states: one load per refocus
    /// plus every re-executed action.
    pub refocus_actions: usize,
    pub background_expansions: usize,
    pub nodes: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub success: bool,
    pub trajectory: Trajectory,
    pub answer: Option<String>,
    pub stats: SearchStats,
    pub plan: Plan,
    pub tree: Tree,
    pub trace: Trace,
    /// Set when a failure ended the run early.
    pub error: Option<String>,
}

/// Runs the search for `task` on `graph`.
///
/// Errors before the first cycle are returned as `Err`; later ones end the
/// run with a failed result that keeps its statistics.
pub fn search(
    task: &SearchTask,
    graph: &SiteGraph,
    config: &SearchConfig,
    reasoner: &mut dyn Reasoner,
    memory: &mut MemoryStore,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let started = Instant::now();
    let mut trace = Trace::new();
    trace.emit(TraceEvent::Start {
        schema_version: TRACE_SCHEMA_VERSION,
        task: task.id.clone(),
        intent: task.intent.clone(),
        config: serde_json::to_value(config).expect("config serializes"),
    });

    let summaries = memory.summaries_for_decomposition();
    let plan = decompose(&task.intent, (!summaries.is_empty()).then_some(summaries), reasoner)?;
    trace.emit(TraceEvent::Decompose {
        subtasks: plan
            .subtasks
            .iter()
            .map(|s| PlanNote { objective: s.objective.clone(), predicate: s.predicate.clone() })
            .collect(),
    });

    let live = env::reset(graph);
    let root_view = observe(&live, graph);
    let root_eval = evaluate(reasoner, &plan, &root_view)?;
    let tree = Tree::new(root_view, live.clone(), root_eval.score, plan.active().clone());
    trace.emit(TraceEvent::Evaluate {
        node: 0,
        score: root_eval.score,
        subtask_done: root_eval.subtask_done,
        subtask: plan.active_index,
    });

    let mut engine = Engine {
        task,
        graph,
        config,
        reasoner,
        memory,
        plan,
        tree,
        frontier: Frontier::new(),
        live,
        stats: SearchStats::default(),
        trace,
        bg_remaining: config.background_budget,
        outcome: None,
    };
    engine.advance(&root_eval);

    let run = if goal_check(graph, &engine.live, None) {
        engine.finish_success(0, None);
        Ok(())
    } else if config.is_linear() {
        engine.run_linear()
    } else {
        engine.run_tree()
    };
    let error = match run {
        Ok(()) => None,
        Err(e) => {
            engine.trace.emit(TraceEvent::Error { message: e.to_string() });
            Some(e.to_string())
        }
    };
    Ok(engine.into_result(started, error))
}

fn evaluate(reasoner: &mut dyn Reasoner, plan: &Plan, view: &PageView) -> Result<Evaluation, SearchError> {
    let subtask = plan.active();
    let mut eval = request_evaluation(reasoner, view, subtask)?;
    if let Some(done) = subtask.predicate.decide_locally(view) {
        eval.subtask_done = done;
    }
    Ok(eval)
}

fn no_effect() -> Evaluation {
    Evaluation { score: 0.0, subtask_done: false, task_done_hint: false, rationale: "no effect".into() }
}

struct Engine<'a> {
    task: &'a SearchTask,
    graph: &'a SiteGraph,
    config: &'a SearchConfig,
    reasoner: &'a mut dyn Reasoner,
    memory: &'a mut MemoryStore,
    plan: Plan,
    tree: Tree,
    frontier: Frontier,
    live: EnvState,
    stats: SearchStats,
    trace: Trace,
    bg_remaining: usize,
    /// `(winning node, answer)` once the goal holds.
    outcome: Option<(NodeId, Option<String>)>,
}

/// What happened to one proposal.
enum Cycle {
    Child(NodeId),
    Goal,
    Skipped,
}

impl Engine<'_> {
    fn budget_left(&self) -> bool {
        self.stats.env_actions < self.config.budget
    }

    fn context(&mut self, view: &PageView) -> NodeContext {
        let subtask = self.plan.active().clone();
        let final_subtask = self.plan.is_final_active();
        let record = self.memory.load_for_url(&view.url);
        NodeContext::new(view, &self.task.intent, &subtask, final_subtask, record, DEFAULT_DOM_LIMIT)
    }

    fn advance(&mut self, eval: &Evaluation) {
        let next = check_and_advance(&self.plan, eval);
        if next != self.plan {
            self.trace.emit(TraceEvent::Advance {
                from: self.plan.active_index,
                to: next.active_index,
                complete: next.complete,
            });
            self.plan = next;
        }
    }

    fn refine(&mut self, node: NodeId) -> Result<(), SearchError> {
        if self.plan.complete {
            return Ok(());
        }
        let n = self.tree.node(node);
        let current = self.plan.active().clone();
        let updated = update_subtask(&current, &n.view, &n.prefix, self.reasoner)?;
        if updated != current {
            self.trace.emit(TraceEvent::Refine {
                subtask: current.index,
                from: current.objective.clone(),
                to: updated.objective.clone(),
                revision: updated.revision,
            });
            self.plan.apply_update(updated);
        }
        Ok(())
    }

    /// Brings the live environment to `node`'s state if it is elsewhere.
    fn refocus(&mut self, node: NodeId) -> Result<(), SearchError> {
        let n = self.tree.node(node);
        if client_hash(&self.live) == n.view.client_digest {
            return Ok(());
        }
        let j = n.prefix.len() - 1;
        let outcome = if self.config.replay {
            replay(&self.live, self.graph, &n.prefix, j)?
        } else {
            full_reexecution(&self.live, self.graph, &n.prefix, j)?
        };
        if self.config.replay {
            self.stats.replayed_actions += outcome.replayed;
        }
        self.stats.refocus_actions += outcome.cost();
        self.trace.emit(TraceEvent::Refocus {
            node,
            mode: if self.config.replay { "replay" } else { "full" }.into(),
            checkpoint: outcome.checkpoint,
            replayed: outcome.replayed,
            cost: outcome.cost(),
        });
        self.live = outcome.state;
        Ok(())
    }

    fn record_memory(
        &mut self,
        page: &PageView,
        reason: &str,
        action: &Action,
        result: &str,
        success: bool,
        eval: &Evaluation,
    ) -> Result<(), SearchError> {
        let objective =
            Objective { global_intent: self.task.intent.clone(), active_subtask: self.plan.active().objective.clone() };
        let signature = action_signature(action);
        let record = self.memory.record_cycle(CycleInput {
            page,
            objective,
            reason,
            action,
            result,
            success,
            eval,
            epsilon: self.config.epsilon,
        })?;
        let relevance = record.entry(&signature).map_or(Relevance::Unknown, |e| e.relevance);
        self.trace.emit(TraceEvent::Memory { url: page.url.clone(), signature, relevance });
        Ok(())
    }

    fn suppressed(&mut self, url: &str, signature: &str) -> bool {
        self.memory.irrelevant_signatures(url).contains(signature)
    }

    /// Proposals for `node`, minus memory-suppressed ones, hints first.
    fn proposals(&mut self, node: NodeId) -> Result<Vec<ActionProposal>, SearchError> {
        let view = self.tree.node(node).view.clone();
        let ctx = self.context(&view);
        let subtask = self.plan.active().clone();
        let raw = request_proposals(self.reasoner, &ctx, &subtask, self.config.branch, false)?;
        self.trace.emit(TraceEvent::Propose {
            node,
            url: view.url.clone(),
            proposals: raw
                .iter()
                .map(|p| ProposalNote { signature: action_signature(&p.action), relevance: p.relevance })
                .collect(),
        });
        let mut kept = Vec::new();
        for p in raw {
            let signature = action_signature(&p.action);
            if self.suppressed(&view.url, &signature) {
                self.trace.emit(TraceEvent::Suppressed { node, url: view.url.clone(), signature });
            } else {
                kept.push(p);
            }
        }
        let hints = self.tree.node(node).hints.clone();
        let mut ordered = apply_hints(kept, &hints, |p| &p.action);
        ordered.truncate(self.config.branch);
        Ok(ordered)
    }

    /// Executes `proposal` from `parent` on the live environment and
    /// records the resulting child.
    fn execute(&mut self, parent: NodeId, proposal: &ActionProposal) -> Result<Cycle, SearchError> {
        let action = &proposal.action;
        let signature = action_signature(action);
        self.refocus(parent)?;
        let page = self.tree.node(parent).view.clone();
        self.stats.env_actions += 1;

        let result = match env::step(&self.live, self.graph, action) {
            Ok(r) => r,
            Err(e) => {
                let message = e.to_string();
                self.trace.emit(TraceEvent::Execute {
                    node: parent,
                    url: page.url.clone(),
                    signature,
                    child: None,
                    matched: false,
                    error: Some(message.clone()),
                });
                let eval = Evaluation { rationale: message.clone(), ..no_effect() };
                self.record_memory(&page, &proposal.rationale, action, &format!("error: {message}"), false, &eval)?;
                return Ok(Cycle::Skipped);
            }
        };
        self.live = result.state.clone();
        let eval = if result.matched { evaluate(self.reasoner, &self.plan, &result.view)? } else { no_effect() };
        self.stats.cycles += 1;

        let child = self.tree.add_child(
            parent,
            NewChild {
                action: action.clone(),
                view: result.view.clone(),
                navigated: result.navigated,
                state: result.state.clone(),
                value: eval.score,
                subtask: self.plan.active().clone(),
                pre_expanded: false,
            },
        );
        self.trace.emit(TraceEvent::Execute {
            node: parent,
            url: page.url.clone(),
            signature,
            child: Some(child),
            matched: result.matched,
            error: None,
        });
        self.trace.emit(TraceEvent::Evaluate {
            node: child,
            score: eval.score,
            subtask_done: eval.subtask_done,
            subtask: self.plan.active_index,
        });
        let summary = if result.matched { format!("reached {}", result.view.url) } else { "no effect".to_string() };
        self.record_memory(&page, &proposal.rationale, action, &summary, result.matched, &eval)?;

        let answer = match action {
            Action::Stop { answer } => Some(answer.clone()),
            _ => None,
        };
        if goal_check(self.graph, &result.state, answer.as_deref()) {
            self.finish_success(child, answer);
            return Ok(Cycle::Goal);
        }
        self.advance(&eval);
        if action.is_stop() {
            self.tree.node_mut(child).terminal = true;
        }
        if !result.matched {
            self.tree.node_mut(child).pruned = true;
            self.trace.emit(TraceEvent::Prune { node: child, reason: PruneReason::LowValue });
        }
        Ok(Cycle::Child(child))
    }

    /// Scores a pre-expanded child for real. No environment action is spent.
    fn take_over(&mut self, child: NodeId) -> Result<Cycle, SearchError> {
        let n = self.tree.node(child);
        let parent = n.parent.expect("pre-expanded nodes have a parent");
        let action = n.incoming.clone().expect("pre-expanded nodes have an incoming action");
        let view = n.view.clone();
        let state = n.state.clone();
        let page = self.tree.node(parent).view.clone();
        let signature = action_signature(&action);
        if self.suppressed(&page.url, &signature) {
            self.trace.emit(TraceEvent::Suppressed { node: parent, url: page.url.clone(), signature });
            self.frontier.remove(child);
            self.tree.node_mut(child).pruned = true;
            return Ok(Cycle::Skipped);
        }

        let eval = evaluate(self.reasoner, &self.plan, &view)?;
        self.stats.cycles += 1;
        {
            let n = self.tree.node_mut(child);
            n.evaluated = true;
            n.pruned = false;
            n.value = eval.score;
            n.subtask_snapshot = self.plan.active().clone();
        }
        self.trace.emit(TraceEvent::Reuse { node: parent, url: page.url.clone(), signature, child });
        self.trace.emit(TraceEvent::Evaluate {
            node: child,
            score: eval.score,
            subtask_done: eval.subtask_done,
            subtask: self.plan.active_index,
        });
        self.record_memory(&page, "pre-expanded link", &action, &format!("reached {}", view.url), true, &eval)?;
        if goal_check(self.graph, &state, None) {
            self.finish_success(child, None);
            return Ok(Cycle::Goal);
        }
        self.advance(&eval);
        Ok(Cycle::Child(child))
    }

    fn finish_success(&mut self, node: NodeId, answer: Option<String>) {
        self.trace.emit(TraceEvent::Goal { node, answer: answer.clone() });
        self.outcome = Some((node, answer));
    }

    /// Expands `node` and returns the children it produced.
    fn expand(&mut self, node: NodeId) -> Result<Vec<NodeId>, SearchError> {
        self.tree.node_mut(node).expanded = true;
        let proposals = self.proposals(node)?;
        let mut children = Vec::new();
        for proposal in proposals {
            let signature = action_signature(&proposal.action);
            let cycle = match self.tree.child_by_signature(node, &signature) {
                Some(child) if self.tree.node(child).pre_expanded && !self.tree.node(child).evaluated => {
                    self.take_over(child)?
                }
                Some(_) => Cycle::Skipped,
                None if self.budget_left() => self.execute(node, &proposal)?,
                None => {
                    self.trace.emit(TraceEvent::BudgetExhausted { node, signature });
                    Cycle::Skipped
                }
            };
            match cycle {
                Cycle::Goal => return Ok(children),
                Cycle::Child(child) => {
                    children.push(child);
                    let c = self.tree.node(child);
                    if !c.pruned && !c.terminal {
                        self.frontier.insert(child, c.value);
                    }
                }
                Cycle::Skipped => {}
            }
        }
        Ok(children)
    }

    fn prune_frontier(&mut self) {
        for (node, reason) in prune(&mut self.frontier, self.config.epsilon, self.tree.keys()) {
            self.tree.node_mut(node).pruned = true;
            self.trace.emit(TraceEvent::Prune { node, reason });
        }
    }

    fn background(&mut self) {
        if self.bg_remaining == 0 {
            return;
        }
        let budget = self.bg_remaining.min(self.config.branch);
        let ranked = self.frontier.ranked();
        let mut entries = Vec::new();
        for e in ranked {
            let n = self.tree.node(e.node);
            if n.expanded || !n.evaluated || n.depth >= self.config.depth {
                continue;
            }
            let (view, state) = (n.view.clone(), n.state.clone());
            let context = self.context(&view);
            entries.push(SnapshotEntry {
                node: e.node,
                value: e.value,
                context,
                subtask: self.plan.active().clone(),
                state,
            });
        }
        if entries.is_empty() {
            return;
        }
        let live_before = state_hash(&self.live);
        let tree = &self.tree;
        let known = |node: NodeId, action: &Action, target: Option<&str>| {
            let signature = action_signature(action);
            tree.child_by_signature(node, &signature).is_some()
                || target.is_some_and(|url| tree.pair_seen(url, &signature))
        };
        let out = background_step(&entries, self.graph, self.reasoner, budget, self.config.branch, &known);
        let live_after = state_hash(&self.live);
        self.bg_remaining -= out.used;
        self.stats.background_expansions += out.used;

        let notes = out
            .proposals
            .iter()
            .map(|p| {
                let ctx = &entries.iter().find(|e| e.node == p.node).expect("proposal from an entry").context;
                BackgroundNote {
                    node: p.node,
                    signature: action_signature(&p.action),
                    relevance: p.relevance,
                    pre_expanded: p.pre_expandable,
                    href: if p.pre_expandable { link_target(&p.action, ctx).map(str::to_string) } else { None },
                }
            })
            .collect();
        self.trace.emit(TraceEvent::Background {
            live_before,
            live_after,
            budget,
            used: out.used,
            proposals: notes,
            failures: out.failures.iter().map(|(n, e)| format!("node {n}: {e}")).collect(),
        });
        let subtask = self.plan.active().clone();
        let merged = merge_proposals(&mut self.tree, &mut self.frontier, out.proposals, &subtask);
        self.trace.emit(TraceEvent::Merge { added: merged.added, dropped: merged.dropped, hinted: merged.hinted });
        self.prune_frontier();
    }

    fn run_tree(&mut self) -> Result<(), SearchError> {
        self.frontier.insert(0, self.tree.node(0).value);
        while self.outcome.is_none() && self.budget_left() {
            let Some(entry) = self.frontier.select() else { break };
            let node = entry.node;
            let n = self.tree.node(node);
            self.trace.emit(TraceEvent::Select { node, value: entry.value, depth: n.depth, url: n.view.url.clone() });

            let children = if n.pre_expanded && !n.evaluated {
                match self.take_over(node)? {
                    Cycle::Child(child) => {
                        self.frontier.insert(child, self.tree.node(child).value);
                        vec![child]
                    }
                    _ => Vec::new(),
                }
            } else if n.depth >= self.config.depth {
                self.trace.emit(TraceEvent::Retire { node, depth: n.depth });
                continue;
            } else {
                self.expand(node)?
            };
            if self.outcome.is_some() {
                break;
            }
            // The round's latest observation: its best new page, else the node itself.
            let observed = children
                .iter()
                .copied()
                .filter(|&c| !self.tree.node(c).pruned)
                .fold(None, |best: Option<NodeId>, c| match best {
                    Some(b) if self.tree.node(b).value >= self.tree.node(c).value => Some(b),
                    _ => Some(c),
                })
                .unwrap_or(node);
            self.refine(observed)?;
            self.prune_frontier();
            self.background();
        }
        Ok(())
    }

    /// `d = 0, b = 1`: one path, no backtracking. The walk ends where the
    /// tree search would prune the only child.
    fn run_linear(&mut self) -> Result<(), SearchError> {
        let mut current = 0;
        while self.outcome.is_none() && self.budget_left() {
            let Some(proposal) = self.proposals(current)?.into_iter().next() else { break };
            let child = match self.execute(current, &proposal)? {
                Cycle::Goal => break,
                Cycle::Skipped => continue,
                Cycle::Child(child) => child,
            };
            current = child;
            self.refine(current)?;
            let c = self.tree.node(current);
            if c.terminal || c.pruned || c.value < self.config.epsilon {
                break;
            }
            let (url, signature) = &self.tree.keys()[current];
            let first = self.tree.keys().iter().position(|(u, s)| u == url && s == signature);
            if first != Some(current) {
                break;
            }
        }
        Ok(())
    }

    fn into_result(mut self, started: Instant, error: Option<String>) -> SearchResult {
        self.stats.nodes = self.tree.len();
        self.stats.wall_time_secs = started.elapsed().as_secs_f64();
        let (success, node, answer) = match self.outcome.take() {
            Some((node, answer)) => (true, node, answer),
            None => (false, self.best_node(), None),
        };
        let s = &self.stats;
        self.trace.emit(TraceEvent::End {
            success,
            cycles: s.cycles,
            env_actions: s.env_actions,
            replayed_actions: s.replayed_actions,
            refocus_actions: s.refocus_actions,
            background_expansions: s.background_expansions,
            nodes: s.nodes,
        });
        SearchResult {
            success,
            trajectory: self.tree.node(node).prefix.clone(),
            answer,
            stats: self.stats,
            plan: self.plan,
            tree: self.tree,
            trace: self.trace,
            error,
        }
    }

    /// Highest-valued evaluated node, earliest first among ties.
    fn best_node(&self) -> NodeId {
        let mut best = 0;
        for n in self.tree.nodes() {
            if n.evaluated && n.value > self.tree.node(best).value {
                best = n.id;
            }
        }
        best
    }
}
