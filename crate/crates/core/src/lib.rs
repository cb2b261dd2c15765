//! Voting-method experiments: ballot validation, exact tallies, cross-method
//! consistency, and an event-sourced campaign engine.

pub mod ballot;
pub mod consistency;
pub mod engine;
pub mod ids;
pub mod rational;
pub mod store;
pub mod export;
pub mod fixture;
