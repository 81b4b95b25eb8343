//! Command-line frontend for `rollscape-core`: run configuration, output
//! formats, SVG plots and the subcommands.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;
