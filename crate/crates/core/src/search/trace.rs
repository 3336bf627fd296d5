//! Ordered JSON-lines event log of a run. No timestamps, so two seeded runs
//! produce identical files.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::frontier::{NodeId, PruneReason};
use crate::env::StateDigest;
use crate::memory::Relevance;
use crate::subtask::PredicateSpec;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalNote {
    pub signature: String,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundNote {
    pub node: NodeId,
    pub signature: String,
    pub relevance: f64,
    pub pre_expanded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub href: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNote {
    pub objective: String,
    pub predicate: PredicateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        schema_version: u32,
        task: String,
        intent: String,
        config: Value,
    },
    Decompose {
        subtasks: Vec<PlanNote>,
    },
    Select {
        node: NodeId,
        value: f64,
        depth: usize,
        url: String,
    },
    Retire {
        node: NodeId,
        depth: usize,
    },
    Refocus {
        node: NodeId,
        mode: String,
        checkpoint: usize,
        replayed: usize,
        cost: usize,
    },
    Propose {
        node: NodeId,
        url: String,
        proposals: Vec<ProposalNote>,
    },
    Suppressed {
        node: NodeId,
        url: String,
        signature: String,
    },
    BudgetExhausted {
        node: NodeId,
        signature: String,
    },
    Execute {
        node: NodeId,
        url: String,
        signature: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        child: Option<NodeId>,
        matched: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    /// A pre-expanded child taken over by the main loop.
    Reuse {
        node: NodeId,
        url: String,
        signature: String,
        child: NodeId,
    },
    Evaluate {
        node: NodeId,
        score: f64,
        subtask_done: bool,
        subtask: usize,
    },
    Memory {
        url: String,
        signature: String,
        relevance: Relevance,
    },
    Advance {
        from: usize,
        to: usize,
        complete: bool,
    },
    Refine {
        subtask: usize,
        from: String,
        to: String,
        revision: u32,
    },
    Prune {
        node: NodeId,
        reason: PruneReason,
    },
    Background {
        live_before: StateDigest,
        live_after: StateDigest,
        budget: usize,
        used: usize,
        proposals: Vec<BackgroundNote>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        failures: Vec<String>,
    },
    Merge {
        added: Vec<NodeId>,
        dropped: usize,
        hinted: Vec<NodeId>,
    },
    Goal {
        node: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
    },
    Error {
        message: String,
    },
    End {
        success: bool,
        cycles: usize,
        env_actions: usize,
        replayed_actions: usize,
        refocus_actions: usize,
        background_expansions: usize,
        nodes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, event: TraceEvent) {
        log::debug!("{event:?}");
        self.records.push(TraceRecord { seq: self.records.len(), event });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().map(|r| &r.event)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<TraceRecord>, _>>()?;
        Ok(Self { records })
    }
}
