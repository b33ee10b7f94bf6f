//! Command-line front end: file formats, run configuration and the
//! `register`, `perturb`, `bench` and `synth` commands.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{exit, CliError};
