//! Configuration and pipeline stages behind the `tnnfp` binary.

pub mod commands;
pub mod config;
