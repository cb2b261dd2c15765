//! Strategies, scripted worlds and scenario checks shared by the core test
//! suites and the acceptance harness.

pub mod lifecycle;
pub mod scoring;
