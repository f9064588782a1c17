//! Command-line front end. [`run`] parses arguments and executes one command in
//! process, so tests can drive it without spawning the binary.

pub mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    /// One-line `key=value` reason for nonzero exits.
    pub reason: Option<String>,
}

impl CommandResult {
    pub fn ok(artifacts: Vec<PathBuf>) -> Self {
        CommandResult {
            exit_code: EXIT_OK,
            artifacts,
            reason: None,
        }
    }

    fn failed(exit_code: i32, kind: &str, message: &str) -> Self {
        let message = message.replace(['\n', '\r'], " ");
        CommandResult {
            exit_code,
            artifacts: Vec::new(),
            reason: Some(format!("error={kind} exit={exit_code} message={message:?}")),
        }
    }
}

/// Parses `args` (including the program name) and runs the selected command.
/// Help and version output goes to stdout and yields exit code 0.
pub fn run<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult::ok(Vec::new()),
                _ => {
                    let rendered = e.render().to_string();
                    let first = rendered.lines().next().unwrap_or("invalid arguments");
                    CommandResult::failed(EXIT_USAGE, "usage", first.trim_start_matches("error: "))
                }
            };
        }
    };
    match commands::execute(&cli) {
        Ok(result) => result,
        Err(e) => classify(&e),
    }
}

fn classify(err: &anyhow::Error) -> CommandResult {
    match err.downcast_ref::<latent_align::Error>() {
        Some(e @ latent_align::Error::Diverged { .. }) => {
            CommandResult::failed(EXIT_DIVERGED, "diverged", &e.to_string())
        }
        Some(e) => CommandResult::failed(EXIT_VALIDATION, error_kind(e), &e.to_string()),
        None => CommandResult::failed(EXIT_VALIDATION, "io", &format!("{err:#}")),
    }
}

fn error_kind(e: &latent_align::Error) -> &'static str {
    use latent_align::Error::*;
    match e {
        Io { .. } => "io",
        BadMagic(_) | UnsupportedFormat { .. } | TruncatedPayload { .. } => "tensor_format",
        ShapeMismatch(_) => "shape",
        UnsupportedAudio { .. } => "audio",
        Manifest(_) => "manifest",
        InputTooShort { .. } => "input_too_short",
        Config(_) => "config",
        Validation(_) => "validation",
        UndefinedCorrelation(_) => "undefined_correlation",
        Checkpoint(_) => "checkpoint",
        Diverged { .. } => "diverged",
        Json(_) => "json",
        Csv(_) => "csv",
    }
}
