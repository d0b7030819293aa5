use std::process::ExitCode;

use clap::Parser;
use stopcg::cli::{run, CliArgs};

fn main() -> ExitCode {
    match run(CliArgs::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stopcg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
