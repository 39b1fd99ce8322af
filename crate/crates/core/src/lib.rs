//! Evaluation engine for LLM-based Arabic morphosyntactic tagging and CATiB
//! dependency parsing.

pub mod align;
pub mod analysis;
pub mod gateway;
pub mod metrics;
pub mod protocol;
pub mod retrieval;
pub mod runner;
pub mod tok;
pub mod treebank;
