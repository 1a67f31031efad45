//! File formats and the `agentplan` command-line front end.
//!
//! The computation lives in [`agentplan_core`]; this crate reads and writes
//! `.agraph`, catalog, model, plan and report files and wires them to the CLI.

pub mod cli;
pub mod config;
pub mod io;

pub use agentplan_core as core;
