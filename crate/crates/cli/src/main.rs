mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use crate::args::Cli;
use crate::commands::dispatch;
use crate::output::to_json_line;

const THREADS_VAR: &str = "TRANSLATOR_LAB_THREADS";

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = match raw.trim().parse() {
        Ok(t) if t >= 1 => t,
        _ => return Err(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match dispatch(&cli.common, &cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.manifest_json);
            if outcome.manifest.passed {
                ExitCode::SUCCESS
            } else {
                let manifest = outcome.artifacts.last().map(|p| p.display().to_string());
                eprintln!("{}", to_json_line(&json!({ "failed": outcome.manifest.failures(), "manifest": manifest })));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", to_json_line(&json!({ "error": { "kind": e.kind(), "message": e.to_string() } })));
            ExitCode::from(1)
        }
    }
}
