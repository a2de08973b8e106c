//! Command-line tools and the HTTP JSON service for taboo detectors.

pub mod api;
pub mod cli;
pub mod commands;
pub mod config;
pub mod detect;
