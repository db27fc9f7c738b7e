//! Configuration, orchestration and file formats for the `mixhess` binary.

pub mod app;
pub mod config;
pub mod output;
