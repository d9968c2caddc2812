//! Experiment harness: scenario configuration, the reproducible experiment
//! commands, CSV emission and pass/fail checks.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;
