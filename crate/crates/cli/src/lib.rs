//! Command-line front end: argument definitions, command runners and the
//! JSON/CSV report writer.

pub mod args;
pub mod report;
pub mod run;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};

pub const RUNTIME_FAILURE: u8 = 1;
pub const USAGE_FAILURE: u8 = 2;

/// Flag documentation for the subcommand named in `argv`, or the top level.
fn usage_help(argv: &[std::ffi::OsString]) -> String {
    let mut cmd = Cli::command();
    let name = argv.get(1).and_then(|a| a.to_str()).unwrap_or_default();
    match cmd.find_subcommand_mut(name) {
        Some(sub) => sub.render_help().to_string(),
        None => cmd.render_help().to_string(),
    }
}

/// Parses `argv`, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", usage_help(&argv));
            return ExitCode::from(USAGE_FAILURE);
        }
    };
    if let Err(msg) = run::configure_threads(std::env::var("ROBUST_MSPCA_THREADS").ok().as_deref()) {
        eprintln!("stablepca: {msg}");
        return ExitCode::from(USAGE_FAILURE);
    }
    let out = match &cli.command {
        Command::Fit(a) => &a.out,
        Command::Dual(a) => &a.out,
        Command::Simulate(a) => &a.out,
        Command::Bench(a) => &a.out,
    };
    match run::check_out(out).and_then(|_| run::run(&cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("stablepca: error: {e}");
            ExitCode::from(RUNTIME_FAILURE)
        }
    }
}
