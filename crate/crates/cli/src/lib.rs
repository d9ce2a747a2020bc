//! Configuration-driven runner for the `mfgz` command.

pub mod checks;
pub mod commands;
pub mod manifest;
