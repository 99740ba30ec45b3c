//! Library surface of the handoff CLI: config loading and command
//! implementations, kept out of `main` so integration tests and the
//! fixture generator can drive them directly.

pub mod commands;
pub mod config;
pub mod demo;
