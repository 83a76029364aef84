//! Command-line front end for the chain simulator: scenario presets and
//! config files, per-method series output with a reproducibility manifest,
//! and statistical comparison of series files.

pub mod app;
pub mod compare;
pub mod manifest;
pub mod runner;
pub mod scenario;
pub mod table;

pub use app::run_cli;
