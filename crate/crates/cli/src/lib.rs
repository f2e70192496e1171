//! Library side of the `lbtest` command: config schema, presets, output
//! formatting and the subcommand bodies.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;
