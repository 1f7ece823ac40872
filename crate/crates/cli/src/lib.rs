//! Command-line pipeline around `convbid-core`: configuration, stage runners,
//! run manifests, SVG figures and the markdown report.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod report;
