//! Command-line and HTTP front ends for the nl2sql engine.

pub mod commands;
pub mod config;
pub mod gateways;
pub mod repl;
pub mod server;
