//! Persistence, HTTP API and command-line orchestration.

pub mod api;
pub mod cli;
pub mod config;
pub mod store;
pub mod workflow;
