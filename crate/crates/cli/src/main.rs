use std::process::ExitCode;

use clap::Parser;
use pdflow_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pdflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
