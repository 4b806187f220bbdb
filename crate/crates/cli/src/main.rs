use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use sizegraph_cli::{error::exit, run, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::INVALID
            } else {
                exit::OK
            });
        }
    };
    let command = format!("{:?}", cli.command)
        .split(['(', ' '])
        .next()
        .unwrap_or_default()
        .to_lowercase();
    match run(cli).with_context(|| format!("{command} failed")) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            // Library messages already embed their causes; walking the whole
            // chain would repeat them.
            match e.chain().nth(1) {
                Some(cause) => eprintln!("error: {e}: {cause}"),
                None => eprintln!("error: {e}"),
            }
            let code = e
                .downcast_ref::<CliError>()
                .map_or(exit::INVALID, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
