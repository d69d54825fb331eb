//! Command-line front end for the changeloc engine: repository ingestion,
//! bug/commit linking, configuration, state persistence and the commands.

pub mod commands;
pub mod config;
pub mod git;
pub mod linking;
pub mod state;
pub mod streams;
