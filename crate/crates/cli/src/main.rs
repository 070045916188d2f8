//! `mislabel`: command-line driver.
//!
//! Exit codes: 0 on success, 1 on invalid arguments or inputs, 2 on runtime
//! failure. Every run writes `run_config.json` into its output directory and
//! prints a one-line JSON summary on standard output.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use args::Cli;
use commands::{CliError, Output};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();

    let name = cli.command.name();
    let result = Output::create(cli.command.out_dir()).and_then(|mut out| {
        let config = json!({
            "command": name,
            "version": env!("CARGO_PKG_VERSION"),
            "jobs": cli.jobs,
            "args": &cli.command,
        });
        out.json("run_config.json", &config)?;
        let summary = mislabel_core::par::with_thread_limit(cli.jobs, || commands::run(&cli.command, &mut out))?;
        Ok((summary, out))
    });
    match result {
        Ok((summary, out)) => {
            let line = json!({
                "command": name,
                "status": "ok",
                "out": cli.command.out_dir(),
                "files": out.files(),
                "summary": summary,
            });
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
