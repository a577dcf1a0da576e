//! Evolutionary search over executable EEG analysis-pipeline scripts.
//!
//! The engine probes a directory of recordings for metadata ([`eeg`]),
//! retrieves architectural priors from a model catalog ([`knowledge`]),
//! asks a generative backend for candidate scripts ([`llm`]), runs them in
//! a sandbox ([`sandbox`]), scores them ([`reward`]) and grows a journaled
//! tree of solutions ([`tree`]) under a budgeted search loop ([`search`]).

pub mod eeg;
pub mod fixtures;
pub mod knowledge;
pub mod llm;
pub mod reward;
pub mod sandbox;
pub mod search;
pub mod tree;
