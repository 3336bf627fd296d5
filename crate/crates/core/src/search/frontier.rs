use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub node: NodeId,
    pub value: f64,
    pub ordinal: u64,
}

/// Expandable nodes keyed by value, FIFO among equal values.
#[derive(Debug, Clone, Default)]
pub struct Frontier {
    entries: Vec<FrontierEntry>,
    next_ordinal: u64,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FrontierEntry] {
        &self.entries
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.iter().any(|e| e.node == node)
    }

    /// Inserts `node`, replacing any entry it already has. The new entry
    /// gets a fresh ordinal.
    pub fn insert(&mut self, node: NodeId, value: f64) {
        self.remove(node);
        self.entries.push(FrontierEntry { node, value, ordinal: self.next_ordinal });
        self.next_ordinal += 1;
    }

    pub fn remove(&mut self, node: NodeId) -> Option<FrontierEntry> {
        let i = self.entries.iter().position(|e| e.node == node)?;
        Some(self.entries.remove(i))
    }

    fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cur = &self.entries[b];
                    if e.value > cur.value || (e.value == cur.value && e.ordinal < cur.ordinal) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    /// Removes and returns the entry with the highest value, the earliest
    /// inserted among ties.
    pub fn select(&mut self) -> Option<FrontierEntry> {
        let i = self.best_index()?;
        Some(self.entries.remove(i))
    }

    /// Entries by descending value, FIFO among ties.
    pub fn ranked(&self) -> Vec<FrontierEntry> {
        let mut ranked = self.entries.clone();
        ranked.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.ordinal.cmp(&b.ordinal)));
        ranked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    LowValue,
    Repetitive,
}

/// `(url, incoming action signature)` of a node. The root has no signature.
pub type NodeKey = (String, Option<String>);

/// Drops frontier entries with `value < epsilon`, then entries whose
/// `(url, signature)` pair already belongs to an earlier-created node.
///
/// `keys[id]` describes node `id`; node ids grow with creation order.
pub fn prune(frontier: &mut Frontier, epsilon: f64, keys: &[NodeKey]) -> Vec<(NodeId, PruneReason)> {
    let mut first: BTreeMap<(&str, &str), NodeId> = BTreeMap::new();
    for (id, (url, sig)) in keys.iter().enumerate() {
        if let Some(sig) = sig {
            first.entry((url.as_str(), sig.as_str())).or_insert(id);
        }
    }
    let mut removed = Vec::new();
    frontier.entries.retain(|e| {
        let reason = if e.value < epsilon {
            Some(PruneReason::LowValue)
        } else {
            match &keys[e.node] {
                (url, Some(sig)) if first[&(url.as_str(), sig.as_str())] != e.node => Some(PruneReason::Repetitive),
                _ => None,
            }
        };
        match reason {
            Some(r) => {
                removed.push((e.node, r));
                false
            }
            None => true,
        }
    });
    removed
}
