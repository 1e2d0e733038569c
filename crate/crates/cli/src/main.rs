//! Entry point: parse, dispatch, print one summary line, and map errors to
//! exit codes (1 for usage/domain problems, 2 for numerical failures) with a
//! machine-readable JSON object on standard error.

mod cli;
mod commands;
mod pipeline;

use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let parsed = match cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    match commands::dispatch(parsed.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            0
        }
        Err(err) => {
            emit_error(err.kind(), &err.to_string());
            err.exit_code()
        }
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            print!("{e}");
            0
        }
        ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => {
            emit_error(
                "usage",
                &format!(
                    "unknown or missing subcommand; valid subcommands: {}",
                    cli::VALID_SUBCOMMANDS
                ),
            );
            1
        }
        _ => {
            emit_error("usage", e.to_string().trim_end());
            1
        }
    }
}

/// `{"error":{"kind":...,"message":...}}` on standard error.
fn emit_error(kind: &str, message: &str) {
    let payload = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{payload}");
}
