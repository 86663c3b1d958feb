//! Companion crate to `fockdyn-core`: TOML scenario configs, a deterministic
//! scenario runner with JSON/CSV artifacts, and small inspection subcommands.
//! Everything here is std-side plumbing; the numerics live in the core crate.

pub mod config;
pub mod factor;
pub mod outputs;
pub mod parallel;
pub mod scenario;
pub mod witness;
