//! Library surface of the `nfc` command-line tool: run configuration and
//! the command implementations, exposed for in-process testing.

pub mod commands;
pub mod config;
