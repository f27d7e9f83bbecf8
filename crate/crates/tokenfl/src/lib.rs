//! File formats, presets and commands around the `tokenfl-core` engine.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod metrics;
