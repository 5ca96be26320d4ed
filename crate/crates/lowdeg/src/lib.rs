//! File formats, configuration, parallel runners and the `lowdeg` command
//! line on top of `lowdeg-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod runner;
pub mod sweep;

pub use lowdeg_core;
