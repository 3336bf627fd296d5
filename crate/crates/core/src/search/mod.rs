//! Subtask-aware best-first search over page states.

mod engine;
mod frontier;
mod trace;
mod tree;

pub use engine::{search, SearchConfig, SearchError, SearchResult, SearchStats, SearchTask};
pub use frontier::{prune, Frontier, FrontierEntry, NodeId, NodeKey, PruneReason};
pub use trace::{BackgroundNote, PlanNote, ProposalNote, Trace, TraceEvent, TraceRecord, TRACE_SCHEMA_VERSION};
pub use tree::{NewChild, SearchNode, Tree};
