//! `fraclab` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or flag values),
//! 2 on data, I/O or numeric failures.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use fraclab_core::Error;

use args::Cli;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
