//! Experiment driver: reads a configuration, runs one workflow and writes
//! deterministic CSV tables.

pub mod experiments;
pub mod output;
pub mod spec;
