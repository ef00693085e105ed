use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use snipsearch_cli::commands::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => {
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = out.flush();
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
