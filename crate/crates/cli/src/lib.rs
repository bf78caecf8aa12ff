//! Command-line surface and experiment harness over the synthesis core.

pub mod commands;
pub mod compare;
pub mod config;
pub mod experiments;
pub mod fixtures;
pub mod provenance;
