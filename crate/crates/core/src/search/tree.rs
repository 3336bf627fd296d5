use crate::action::{action_signature, Action};
use crate::env::{EnvState, PageView};
use crate::replay::{nearest_checkpoint, Trajectory};
use crate::subtask::Subtask;

use super::frontier::{NodeId, NodeKey};

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub view: PageView,
    pub incoming: Option<Action>,
    pub value: f64,
    pub depth: usize,
    pub prefix: Trajectory,
    pub subtask_snapshot: Subtask,
    /// Nearest cacheable index of `prefix` at or before this node.
    pub checkpoint: Option<usize>,
    pub pruned: bool,
    pub pre_expanded: bool,
    /// False only for pre-expanded nodes not yet scored by the evaluator.
    pub evaluated: bool,
    pub expanded: bool,
    /// STOP children are leaves.
    pub terminal: bool,
    /// Deferred background proposals, best first.
    pub hints: Vec<Action>,
    /// Environment state at creation. Read-only; background work copies it.
    pub state: EnvState,
    pub children: Vec<NodeId>,
}

impl SearchNode {
    pub fn signature(&self) -> Option<String> {
        self.incoming.as_ref().map(action_signature)
    }
}

/// Append-only node arena. Node ids are creation order.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<SearchNode>,
    keys: Vec<NodeKey>,
}

pub struct NewChild {
    pub action: Action,
    pub view: PageView,
    pub navigated: bool,
    pub state: EnvState,
    pub value: f64,
    pub subtask: Subtask,
    pub pre_expanded: bool,
}

impl Tree {
    pub fn new(view: PageView, state: EnvState, value: f64, subtask: Subtask) -> Self {
        let root = SearchNode {
            id: 0,
            parent: None,
            prefix: Trajectory::root(view.clone()),
            view,
            incoming: None,
            value,
            depth: 0,
            subtask_snapshot: subtask,
            checkpoint: Some(0),
            pruned: false,
            pre_expanded: false,
            evaluated: true,
            expanded: false,
            terminal: false,
            hints: Vec::new(),
            state,
            children: Vec::new(),
        };
        let key = (root.view.url.clone(), None);
        Self { nodes: vec![root], keys: vec![key] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn add_child(&mut self, parent: NodeId, child: NewChild) -> NodeId {
        let id = self.nodes.len();
        let p = &self.nodes[parent];
        let prefix = p.prefix.extended(child.action.clone(), child.view.clone(), child.navigated);
        let checkpoint = nearest_checkpoint(&prefix, prefix.len() - 1).ok();
        let node = SearchNode {
            id,
            parent: Some(parent),
            view: child.view,
            incoming: Some(child.action),
            value: child.value,
            depth: p.depth + 1,
            prefix,
            subtask_snapshot: child.subtask,
            checkpoint,
            pruned: false,
            pre_expanded: child.pre_expanded,
            evaluated: !child.pre_expanded,
            expanded: false,
            terminal: false,
            hints: Vec::new(),
            state: child.state,
            children: Vec::new(),
        };
        self.keys.push((node.view.url.clone(), node.signature()));
        self.nodes[parent].children.push(id);
        self.nodes.push(node);
        id
    }

    pub fn child_by_signature(&self, parent: NodeId, signature: &str) -> Option<NodeId> {
        self.nodes[parent].children.iter().copied().find(|&c| self.keys[c].1.as_deref() == Some(signature))
    }

    /// Whether some node was already reached at `url` by `signature`.
    pub fn pair_seen(&self, url: &str, signature: &str) -> bool {
        self.keys.iter().any(|(u, s)| u == url && s.as_deref() == Some(signature))
    }
}
