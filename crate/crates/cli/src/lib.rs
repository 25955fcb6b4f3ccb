//! Library half of the `ddmm` binary, shared with its integration tests.

pub mod commands;
pub mod config;
pub mod manifest;
