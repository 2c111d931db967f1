//! Command-line and HTTP front ends over the retrieval pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;
