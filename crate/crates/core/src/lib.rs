pub mod action;
pub mod background;
pub mod env;
pub mod harness;
pub mod memory;
pub mod reasoner;
pub mod replay;
pub mod search;
pub mod subtask;
